use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::*;

fn accuracy() -> Accuracy {
    Accuracy::new(0.0877, 0.05).unwrap()
}

fn engine(ids: &[&str], budget: u64) -> Engine {
    let targets = TargetSet::from_ids(ids.iter().copied()).unwrap();
    Engine::new(targets, EngineConfig::new(accuracy(), budget)).unwrap()
}

fn letters(n: usize) -> Vec<String> {
    (0..n).map(|i| alloc::format!("t{i:02}")).collect()
}

fn issue(e: &mut Engine) -> EvaluationRequest {
    match e.on_join(0) {
        JoinOutcome::Issued(r) => r,
        JoinOutcome::Done => panic!("unexpected done"),
    }
}

fn head_keys(e: &Engine) -> Vec<String> {
    e.frontier().active_pairs().map(|p| e.pair_key(p)).collect()
}

#[test]
fn init_four_targets() {
    let e = engine(&["a", "b", "c", "d"], 100);
    assert_eq!(head_keys(&e), vec!["a:b", "c:d"]);
    assert_eq!(e.phase(), Phase::Sorting);
}

#[test]
fn init_three_targets_follows_floor_split() {
    let e = engine(&["a", "b", "c"], 100);
    assert_eq!(head_keys(&e), vec!["b:c"]);
    assert_eq!(e.current_order().ids, vec!["a", "b", "c"]);
}

#[test]
fn init_reference_configuration_has_no_warning() {
    let ids = letters(27);
    let targets = TargetSet::from_ids(ids).unwrap();
    let e = Engine::new(targets.clone(), EngineConfig::new(accuracy(), 24_960)).unwrap();
    assert_eq!(e.max_comparisons(), 240);
    assert!(e.warnings().is_empty());
    let tight = Engine::new(targets, EngineConfig::new(accuracy(), 24_959)).unwrap();
    assert_eq!(
        tight.warnings(),
        vec![EngineWarning::BudgetBelowWorstCase {
            worst_case: 24_960,
            budget: 24_959
        }]
    );
}

#[test]
fn init_errors() {
    assert_eq!(
        TargetSet::from_ids(["a"]).unwrap_err(),
        EngineError::TooFewTargets(1)
    );
    assert_eq!(
        TargetSet::from_ids(["a", "a"]).unwrap_err(),
        EngineError::DuplicateTarget("a".into())
    );
    let targets = TargetSet::from_ids(["a", "b"]).unwrap();
    assert_eq!(
        Engine::new(targets, EngineConfig::new(accuracy(), 0)).unwrap_err(),
        EngineError::ZeroBudget
    );
}

#[test]
fn balanced_joins_spread_over_fresh_pairs() {
    // seven targets: [a,b,c] | [d,e,f,g] gives heads b:c, d:e, f:g
    let mut e = engine(&["a", "b", "c", "d", "e", "f", "g"], 100);
    assert_eq!(head_keys(&e).len(), 3);
    let keys: Vec<String> = (0..3)
        .map(|_| {
            let r = issue(&mut e);
            alloc::format!("{}:{}", r.left, r.right)
        })
        .collect();
    assert_eq!(keys, vec!["b:c", "d:e", "f:g"]);
}

#[test]
fn naive_joins_pile_onto_one_pair() {
    let targets = TargetSet::from_ids(["a", "b", "c", "d", "e", "f", "g"]).unwrap();
    let mut config = EngineConfig::new(accuracy(), 100);
    config.policy = SelectionPolicy::Naive;
    let mut e = Engine::new(targets, config).unwrap();
    for _ in 0..3 {
        let r = issue(&mut e);
        assert_eq!((r.left.as_str(), r.right.as_str()), ("b", "c"));
    }
    assert_eq!(e.pairs()[e.find_pair("b", "c").unwrap()].requested, 3);
}

#[test]
fn single_fresh_pair_scores_one_half() {
    let e = engine(&["a", "b"], 10);
    assert_eq!(e.expected_error_bias(0), 0.5);
    assert_eq!(e.select_pair(), Some(0));
}

#[test]
fn budget_gate_counts_reservations() {
    let mut e = engine(&["a", "b", "c", "d"], 10);
    for _ in 0..8 {
        let r = issue(&mut e);
        assert!(e.on_submit(r.request_id, true).is_accepted());
    }
    issue(&mut e);
    issue(&mut e);
    assert_eq!(e.submitted_total(), 8);
    assert_eq!(e.outstanding_count(), 2);
    assert_eq!(e.on_join(0), JoinOutcome::Done);
    assert_eq!(e.phase(), Phase::Exhausted);
}

#[test]
fn fourteen_straight_wins_determine_at_fourteen() {
    let mut e = engine(&["a", "b"], 1000);
    for k in 1..=13 {
        let r = issue(&mut e);
        assert_eq!(
            e.on_submit(r.request_id, true),
            SubmitOutcome::Accepted,
            "at {k}"
        );
    }
    let r = issue(&mut e);
    match e.on_submit(r.request_id, true) {
        SubmitOutcome::Converged(d) => {
            assert_eq!(d.at_received, 14);
            assert_eq!(d.at_win_rate, 1.0);
            assert_eq!(d.winner, 0);
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(e.current_order().ids, vec!["b", "a"]);
    assert!(e.current_order().complete);
    assert_eq!(e.phase(), Phase::Refinement);
}

#[test]
fn tie_reaches_the_cap() {
    let mut e = engine(&["a", "b"], 1000);
    for k in 0..239 {
        let r = issue(&mut e);
        assert_eq!(
            e.on_submit(r.request_id, k % 2 == 0),
            SubmitOutcome::Accepted
        );
    }
    let r = issue(&mut e);
    let outcome = e.on_submit(r.request_id, false);
    let d = outcome.decision().expect("determined at m");
    assert_eq!(d.at_received, 240);
    assert_eq!(d.at_win_rate, 0.5);
    // tie goes to the right element
    assert_eq!(d.winner, 1);
}

#[test]
fn duplicate_and_unknown_submissions() {
    let mut e = engine(&["a", "b"], 100);
    let r = issue(&mut e);
    assert!(e.on_submit(r.request_id, true).is_accepted());
    let before = e.clone();
    assert_eq!(
        e.on_submit(r.request_id, true),
        SubmitOutcome::RejectedDuplicate
    );
    assert_eq!(
        e.on_submit(RequestId(99), true),
        SubmitOutcome::RejectedUnknown
    );
    assert_eq!(e, before);
    assert_eq!(e.request_status(r.request_id), RequestStatus::Submitted);
}

#[test]
fn expiry_releases_reservation() {
    let mut e = engine(&["a", "b"], 100);
    let r = issue(&mut e);
    assert_eq!(e.pairs()[0].requested, 1);
    assert!(e.on_expire(r.request_id));
    assert_eq!(e.pairs()[0].requested, 0);
    assert!(!e.on_expire(r.request_id));
    assert_eq!(
        e.on_submit(r.request_id, true),
        SubmitOutcome::RejectedUnknown
    );
    assert_eq!(e.request_status(r.request_id), RequestStatus::Expired);
}

#[test]
fn expiry_ledger_arithmetic() {
    let mut e = engine(&["a", "b"], 100);
    let reqs: Vec<_> = (0..3).map(|_| issue(&mut e)).collect();
    e.on_expire(reqs[1].request_id);
    e.on_submit(reqs[0].request_id, true);
    e.on_submit(reqs[2].request_id, false);
    assert_eq!(e.pairs()[0].requested, 2);
    assert_eq!(e.pairs()[0].tally.received(), 2);
}

#[test]
fn ttl_deadlines() {
    let targets = TargetSet::from_ids(["a", "b"]).unwrap();
    let mut config = EngineConfig::new(accuracy(), 100);
    config.request_ttl = 10;
    let mut e = Engine::new(targets, config).unwrap();
    let JoinOutcome::Issued(r) = e.on_join(5) else {
        panic!()
    };
    assert_eq!(r.deadline(), 15);
    assert!(e.expired_requests(14).is_empty());
    assert_eq!(e.expired_requests(15), vec![r.request_id]);
}

/// Judge every issued pair immediately by comparing target indices.
fn run_deterministic(e: &mut Engine, better: impl Fn(&str, &str) -> bool) {
    while !e.is_converged() {
        let r = issue(e);
        e.on_submit(r.request_id, better(&r.left, &r.right));
    }
}

#[test]
fn deterministic_preferences_sort_correctly() {
    let mut e = engine(&["c", "a", "d", "b"], 10_000);
    assert!(!e.current_order().complete);
    run_deterministic(&mut e, |l, r| l > r);
    assert_eq!(
        e.current_order(),
        RankedOrder {
            ids: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            complete: true
        }
    );
}

#[test]
fn refinement_targets_compared_pairs_only() {
    let mut e = engine(&["c", "a", "d", "b"], 10_000);
    run_deterministic(&mut e, |l, r| l > r);
    let compared = e.pairs().len();
    for _ in 0..200 {
        let expected = e.select_pair().unwrap();
        let best = (0..e.pairs().len())
            .map(|p| e.expected_error_bias(p))
            .fold(f64::MIN, f64::max);
        assert_eq!(e.expected_error_bias(expected), best);
        let r = issue(&mut e);
        assert_eq!(e.find_pair(&r.left, &r.right), Some(expected));
        e.on_submit(r.request_id, r.left > r.right);
    }
    assert_eq!(e.pairs().len(), compared);
}

#[test]
fn stimuli_rotate_within_a_pair() {
    let targets = TargetSet::new(vec![
        Target::new("a", vec!["a1".into(), "a2".into(), "a3".into()]),
        Target::new("b", vec!["b1".into(), "b2".into()]),
    ])
    .unwrap();
    let mut e = Engine::new(targets, EngineConfig::new(accuracy(), 100)).unwrap();
    let got: Vec<(String, String)> = (0..6)
        .map(|_| {
            let r = issue(&mut e);
            (r.left_stimulus, r.right_stimulus)
        })
        .collect();
    let lefts: Vec<&str> = got.iter().map(|g| g.0.as_str()).collect();
    let rights: Vec<&str> = got.iter().map(|g| g.1.as_str()).collect();
    assert_eq!(lefts, ["a1", "a2", "a3", "a1", "a2", "a3"]);
    assert_eq!(rights, ["b1", "b2", "b1", "b2", "b1", "b2"]);
}

#[test]
fn journal_replay_round_trip_and_prefixes() {
    let targets = TargetSet::from_ids(letters(6)).unwrap();
    let fresh = Engine::new(targets, EngineConfig::new(accuracy(), 400)).unwrap();
    let mut j = Journal::new(fresh.clone());
    let mut held = Vec::new();
    let mut step = 0u64;
    while let JoinOutcome::Issued(r) = j.join("ev", step) {
        step += 1;
        held.push(r.request_id);
        if held.len() == 3 {
            let id = held.remove(0);
            if step.is_multiple_of(17) {
                j.expire(id, step);
            } else {
                let idx = id.0 as usize;
                j.submit("ev", id, (idx * 7) % 5 < 3, step);
            }
        }
    }
    let log = j.drain();

    let empty = Journal::replay(fresh.clone(), &[]).unwrap();
    assert_eq!(empty.journal.engine(), &fresh);

    let full = Journal::replay(fresh.clone(), &log).unwrap();
    assert!(full.missing.is_empty());
    assert_eq!(full.journal.engine(), j.engine());
    assert_eq!(full.journal.last_seq(), j.last_seq());

    for cut in [1, log.len() / 3, log.len() / 2, log.len() - 1] {
        let partial = Journal::replay(fresh.clone(), &log[..cut]).unwrap();
        assert_eq!(
            partial.journal.last_seq() as usize,
            cut + partial.missing.len()
        );
        for (m, orig) in partial.missing.iter().zip(&log[cut..]) {
            assert_eq!(m.event, orig.event);
        }
    }
}

#[test]
fn replay_rejects_bad_logs() {
    let targets = TargetSet::from_ids(["a", "b"]).unwrap();
    let fresh = Engine::new(targets, EngineConfig::new(accuracy(), 100)).unwrap();
    let submit = LoggedEvent {
        seq: 1,
        timestamp: 0,
        event: Event::Submit {
            token: "x".into(),
            request_id: RequestId(0),
            left_won: true,
            wins: 1,
            received: 1,
        },
    };
    let err = Journal::replay(fresh.clone(), &[submit]).unwrap_err();
    assert_eq!(err.seq, 1);

    let mut j = Journal::new(fresh.clone());
    j.join("x", 0);
    let mut log = j.drain();
    log[1].seq = 5;
    assert_eq!(Journal::replay(fresh.clone(), &log).unwrap_err().seq, 5);

    let mut j = Journal::new(fresh.clone());
    for _ in 0..14 {
        let JoinOutcome::Issued(r) = j.join("x", 0) else {
            panic!()
        };
        j.submit("x", r.request_id, true, 0);
    }
    let mut log = j.drain();
    let det = log
        .iter()
        .position(|e| e.event.kind() == "Determine")
        .unwrap();
    if let Event::Determine { winner, .. } = &mut log[det].event {
        *winner = "b".into();
    }
    assert_eq!(
        Journal::replay(fresh, &log).unwrap_err().seq,
        det as u64 + 1
    );
}

#[test]
fn event_json_shape() {
    let e = LoggedEvent {
        seq: 3,
        timestamp: 9,
        event: Event::Expire {
            request_id: RequestId(4),
        },
    };
    let s = serde_json::to_string(&e).unwrap();
    assert_eq!(
        s,
        r#"{"seq":3,"timestamp":9,"kind":"Expire","payload":{"request_id":4}}"#
    );
    assert_eq!(serde_json::from_str::<LoggedEvent>(&s).unwrap(), e);
}

#[test]
fn snapshot_round_trip() {
    let mut e = engine(&["c", "a", "d", "b", "e"], 500);
    for k in 0..40 {
        let r = issue(&mut e);
        if k % 5 != 0 {
            e.on_submit(r.request_id, k % 3 != 0);
        }
    }
    let snap = serde_json::to_string(&e).unwrap();
    let restored: Engine = serde_json::from_str(&snap).unwrap();
    assert_eq!(restored, e);
}

#[derive(Debug, Clone)]
enum Op {
    Join,
    Submit(usize, bool),
    Expire(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => Just(Op::Join),
        4 => (any::<usize>(), any::<bool>()).prop_map(|(i, b)| Op::Submit(i, b)),
        1 => any::<usize>().prop_map(Op::Expire),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn engine_invariants(n in 2usize..9, budget in 1u64..300, ops in prop::collection::vec(op(), 1..600)) {
        let targets = TargetSet::new(
            (0..n).map(|i| Target::new(alloc::format!("t{i}"), vec![alloc::format!("s{i}a"), alloc::format!("s{i}b")])).collect()
        ).unwrap();
        let acc = Accuracy::new(0.3, 0.2).unwrap();
        let mut e = Engine::new(targets, EngineConfig::new(acc, budget)).unwrap();
        let mut live: Vec<RequestId> = Vec::new();
        let mut determinations = 0usize;
        let mut presentations: alloc::collections::BTreeMap<(usize, String), u64> = Default::default();
        for op in ops {
            match op {
                Op::Join => {
                    if let JoinOutcome::Issued(r) = e.on_join(0) {
                        let p = e.find_pair(&r.left, &r.right).unwrap();
                        *presentations.entry((p, r.left_stimulus.clone())).or_default() += 1;
                        *presentations.entry((p, r.right_stimulus.clone())).or_default() += 1;
                        live.push(r.request_id);
                    } else {
                        prop_assert!(e.submitted_total() + e.outstanding_count() as u64 >= budget);
                    }
                }
                Op::Submit(i, b) if !live.is_empty() => {
                    let id = live.remove(i % live.len());
                    let before: Vec<bool> = e.pairs().iter().map(|p| p.determination.is_some()).collect();
                    let out = e.on_submit(id, b);
                    prop_assert!(out.is_accepted());
                    let after = e.pairs().iter().filter(|p| p.determination.is_some()).count();
                    let newly = after - before.iter().filter(|d| **d).count();
                    prop_assert!(newly <= 1);
                    determinations += newly;
                }
                Op::Expire(i) if !live.is_empty() => {
                    let id = live.remove(i % live.len());
                    prop_assert!(e.on_expire(id));
                }
                _ => {}
            }
            prop_assert!(e.submitted_total() <= budget);
            prop_assert!(e.submitted_total() + e.outstanding_count() as u64 <= budget);
            let (mut order, _) = e.current_order_indices();
            order.sort_unstable();
            prop_assert_eq!(order, (0..n).collect::<Vec<_>>());
            for p in e.pairs() {
                prop_assert!(p.tally.received() <= p.requested);
            }
        }
        let determined = e.pairs().iter().filter(|p| p.determination.is_some()).count();
        prop_assert_eq!(determined, determinations);
        if e.is_converged() {
            let b = crate::stats::sort_complexity_bounds(n as u64).unwrap();
            prop_assert!((b.lower..=b.upper).contains(&(determined as u64)));
        }
        // per pair, both stimuli of a target are shown within one of each other
        for p in 0..e.pairs().len() {
            for t in [e.pairs()[p].left, e.pairs()[p].right] {
                let counts: Vec<u64> = e.targets().get(t).stimuli.iter()
                    .map(|s| presentations.get(&(p, s.clone())).copied().unwrap_or(0))
                    .collect();
                prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
            }
        }
    }
}
