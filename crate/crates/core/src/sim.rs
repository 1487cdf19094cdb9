//! Discrete-event crowd simulator.
//!
//! A pool of virtual evaluators repeatedly joins, waits a sampled latency,
//! and submits a Bernoulli judgment drawn from the true preference of the
//! issued pair (or abandons the request, leaving it to expire). Everything is
//! derived from one seed, so a run is reproducible event for event.
//!
//! Judgments come from a counter-based substream per pair: the k-th judgment
//! a pair receives depends only on `(seed, pair, k)`. Two runs that differ in
//! scheduling or selection policy therefore see the same per-pair streams.

use alloc::collections::BinaryHeap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Reverse;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{
    Engine, EngineConfig, JoinOutcome, Journal, LoggedEvent, RequestId, SelectionPolicy, TargetSet,
};
use crate::error::{OrderMismatch, SimError};
use crate::report::{self, ReportRow};
use crate::stats::Accuracy;

/// True pairwise preferences, indexed by position in the target set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruePreferenceModel {
    /// `matrix[i][j]` is the probability that `i` beats `j`.
    ExplicitMatrix(Vec<Vec<f64>>),
    /// Logistic in the strength difference: `p_ij = 1 / (1 + exp(θ_j − θ_i))`.
    StrengthBased(Vec<f64>),
}

impl TruePreferenceModel {
    pub fn len(&self) -> usize {
        match self {
            TruePreferenceModel::ExplicitMatrix(m) => m.len(),
            TruePreferenceModel::StrengthBased(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Probability that target `i` is preferred over target `j`.
    pub fn probability(&self, i: usize, j: usize) -> f64 {
        match self {
            TruePreferenceModel::ExplicitMatrix(m) => m[i][j],
            TruePreferenceModel::StrengthBased(s) => 1.0 / (1.0 + libm::exp(s[j] - s[i])),
        }
    }

    pub fn validate(&self, targets: usize) -> Result<(), SimError> {
        if self.len() != targets {
            return Err(SimError::ModelSize {
                model: self.len(),
                targets,
            });
        }
        if let TruePreferenceModel::ExplicitMatrix(m) = self {
            for i in 0..targets {
                if m[i].len() != targets {
                    return Err(SimError::ModelSize {
                        model: m[i].len(),
                        targets,
                    });
                }
                for j in 0..targets {
                    let p = m[i][j];
                    let complement = (p + m[j][i] - 1.0).abs() < 1e-9;
                    if i != j && (!(0.0..=1.0).contains(&p) || !complement) {
                        return Err(SimError::ModelEntry(i, j));
                    }
                }
            }
        }
        Ok(())
    }

    /// Target indices in ascending true quality. Matrix models rank by the
    /// number of opponents each target beats with probability above 1/2.
    pub fn true_order(&self) -> Vec<usize> {
        let n = self.len();
        let mut idx: Vec<usize> = (0..n).collect();
        match self {
            TruePreferenceModel::StrengthBased(s) => idx.sort_by(|&a, &b| {
                s[a].partial_cmp(&s[b])
                    .unwrap_or(core::cmp::Ordering::Equal)
            }),
            TruePreferenceModel::ExplicitMatrix(_) => {
                let wins = |i: usize| {
                    (0..n)
                        .filter(|&j| j != i && self.probability(i, j) > 0.5)
                        .count()
                };
                idx.sort_by_key(|&i| wins(i));
            }
        }
        idx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Latency {
    Fixed { ticks: u64 },
    Uniform { min: u64, max: u64 },
    Exponential { mean: f64 },
}

impl Latency {
    fn validate(&self) -> Result<(), SimError> {
        match *self {
            Latency::Uniform { min, max } if min > max => Err(SimError::Latency),
            Latency::Exponential { mean } if !(mean > 0.0) => Err(SimError::Latency),
            _ => Ok(()),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        match *self {
            Latency::Fixed { ticks } => ticks,
            Latency::Uniform { min, max } => rng.random_range(min..=max),
            Latency::Exponential { mean } => {
                let u: f64 = rng.random();
                libm::ceil(-mean * libm::log1p(-u)).max(1.0) as u64
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorProfile {
    pub latency: Latency,
    pub abandonment_prob: f64,
    /// Concurrent evaluators.
    pub count: usize,
    /// Request lifetime in ticks.
    pub ttl: u64,
}

impl Default for EvaluatorProfile {
    fn default() -> Self {
        EvaluatorProfile {
            latency: Latency::Uniform { min: 1, max: 10 },
            abandonment_prob: 0.0,
            count: 1,
            ttl: 100,
        }
    }
}

impl EvaluatorProfile {
    pub fn with_count(count: usize) -> Self {
        EvaluatorProfile {
            count,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSetup {
    pub targets: TargetSet,
    pub model: TruePreferenceModel,
    pub profile: EvaluatorProfile,
    pub accuracy: Accuracy,
    pub budget: u64,
    pub policy: SelectionPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub total_submissions: u64,
    pub compared_pairs: usize,
    pub converged: bool,
    pub convergence_at: Option<u64>,
    pub refinement_submissions: u64,
    /// Ascending quality.
    pub order: Vec<String>,
    pub kendall_tau: f64,
    pub adjacent_misorders: usize,
    pub rows: Vec<ReportRow>,
    pub reversal_count: usize,
    pub max_overshoot: u64,
    /// Late submissions summed over all pairs.
    pub total_overshoot: u64,
}

#[derive(Debug, Clone)]
pub struct SimRun {
    pub report: SimReport,
    pub events: Vec<LoggedEvent>,
    pub engine: Engine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Action {
    Join(usize),
    Submit(usize, RequestId),
    Expire(RequestId),
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw in [0, 1) for the `k`-th judgment of pair `(left, right)`.
fn judgment_draw(seed: u64, left: usize, right: usize, k: u64) -> f64 {
    let h = mix64(mix64(mix64(mix64(seed) ^ left as u64) ^ right as u64) ^ k);
    (h >> 11) as f64 / (1u64 << 53) as f64
}

struct Scheduler {
    queue: BinaryHeap<Reverse<(u64, u64, Action)>>,
    counter: u64,
}

impl Scheduler {
    fn at(&mut self, time: u64, action: Action) {
        self.queue.push(Reverse((time, self.counter, action)));
        self.counter += 1;
    }
}

pub fn run_simulation(setup: &SimSetup, seed: u64) -> Result<SimRun, SimError> {
    let n = setup.targets.len();
    setup.model.validate(n)?;
    let profile = &setup.profile;
    if profile.count == 0 {
        return Err(SimError::NoEvaluators);
    }
    if !(0.0..1.0).contains(&profile.abandonment_prob) {
        return Err(SimError::Abandonment(profile.abandonment_prob));
    }
    profile.latency.validate()?;

    let config = EngineConfig {
        accuracy: setup.accuracy,
        budget: setup.budget,
        policy: setup.policy,
        seed,
        request_ttl: profile.ttl,
    };
    let mut journal = Journal::new(Engine::new(setup.targets.clone(), config)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tokens: Vec<String> = (0..profile.count)
        .map(|k| alloc::format!("sim-{k}"))
        .collect();
    let mut sched = Scheduler {
        queue: BinaryHeap::new(),
        counter: 0,
    };
    for ev in 0..profile.count {
        sched.at(0, Action::Join(ev));
    }

    while let Some(Reverse((now, _, action))) = sched.queue.pop() {
        match action {
            Action::Join(ev) => match journal.join(&tokens[ev], now) {
                JoinOutcome::Issued(req) => {
                    sched.at(req.deadline(), Action::Expire(req.request_id));
                    let wait = profile.latency.sample(&mut rng);
                    if rng.random::<f64>() < profile.abandonment_prob {
                        sched.at(now + wait, Action::Join(ev));
                    } else {
                        sched.at(now + wait, Action::Submit(ev, req.request_id));
                    }
                }
                JoinOutcome::Done => {
                    let engine = journal.engine();
                    // expiries may still release reserved budget
                    if engine.outstanding_count() > 0 && engine.submitted_total() < setup.budget {
                        let wait = profile.latency.sample(&mut rng).max(1);
                        sched.at(now + wait, Action::Join(ev));
                    }
                }
            },
            Action::Submit(ev, id) => {
                let engine = journal.engine();
                if let Some(req) = engine.outstanding_request(id) {
                    let left = engine.targets().index_of(&req.left).expect("known target");
                    let right = engine.targets().index_of(&req.right).expect("known target");
                    let pair = engine.find_pair(&req.left, &req.right).expect("known pair");
                    let k = engine.pairs()[pair].tally.received();
                    let left_won =
                        judgment_draw(seed, left, right, k) < setup.model.probability(left, right);
                    journal.submit(&tokens[ev], id, left_won, now);
                }
                sched.at(now, Action::Join(ev));
            }
            Action::Expire(id) => {
                journal.expire(id, now);
            }
        }
    }

    let events = journal.drain();
    let engine = journal.into_engine();
    let report = summarize(&engine, &setup.model);
    Ok(SimRun {
        report,
        events,
        engine,
    })
}

fn summarize(engine: &Engine, model: &TruePreferenceModel) -> SimReport {
    let full = report::build(engine);
    let (order, _) = engine.current_order_indices();
    let truth = model.true_order();
    let eps = engine.accuracy().epsilon();
    let adjacent_misorders = order
        .windows(2)
        .filter(|w| model.probability(w[0], w[1]) > 0.5 + eps)
        .count();
    SimReport {
        total_submissions: engine.submitted_total(),
        compared_pairs: full.summary.compared_pairs,
        converged: full.summary.converged,
        convergence_at: full.summary.convergence_at,
        refinement_submissions: full.summary.refinement_submissions,
        order: full.order,
        kendall_tau: kendall_tau(&order, &truth).expect("same target set"),
        adjacent_misorders,
        reversal_count: full.summary.reversals,
        max_overshoot: engine
            .pairs()
            .iter()
            .map(|p| p.late_submissions)
            .max()
            .unwrap_or(0),
        total_overshoot: engine.pairs().iter().map(|p| p.late_submissions).sum(),
        rows: full.rows,
    }
}

/// Runs the balanced (requested-count) policy and the naive (received-count)
/// policy on the same setup and seed.
pub fn compare_policies(setup: &SimSetup, seed: u64) -> Result<(SimRun, SimRun), SimError> {
    let mut balanced = setup.clone();
    balanced.policy = SelectionPolicy::Balanced;
    let mut naive = setup.clone();
    naive.policy = SelectionPolicy::Naive;
    Ok((
        run_simulation(&balanced, seed)?,
        run_simulation(&naive, seed)?,
    ))
}

/// `1 − 2·discordant / C(n, 2)` between two orderings of the same elements.
pub fn kendall_tau<T: PartialEq>(a: &[T], b: &[T]) -> Result<f64, OrderMismatch> {
    if a.len() != b.len() {
        return Err(OrderMismatch);
    }
    let pos: Vec<usize> = a
        .iter()
        .map(|x| b.iter().position(|y| y == x).ok_or(OrderMismatch))
        .collect::<Result<_, _>>()?;
    let mut seen = pos.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != pos.len() {
        return Err(OrderMismatch);
    }
    let n = a.len();
    if n < 2 {
        return Ok(1.0);
    }
    let mut discordant = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            if pos[i] > pos[j] {
                discordant += 1;
            }
        }
    }
    let total = (n * (n - 1) / 2) as f64;
    Ok(1.0 - 2.0 * discordant as f64 / total)
}
