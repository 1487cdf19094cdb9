//! Asynchronous merge-rank state machine.
//!
//! Evaluators join and receive a pair to judge; submissions update per-pair
//! tallies and, once a pair's error bias falls within the tolerance (or the
//! pair reaches the judgment cap), its winner is fixed exactly once and the
//! owning merge advances. After the sort converges the remaining budget is
//! spent on the compared pairs with the worst expected error bias.

mod frontier;
mod journal;
mod target;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};

pub use frontier::{Advance, Merge, MergeFrontier, Node, NodeState};
pub use journal::{Event, Journal, LoggedEvent, Replayed};
pub use target::{Target, TargetSet};

use crate::error::EngineError;
use crate::stats::{self, Accuracy, PairTally};

/// How `on_join` ranks candidate pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionPolicy {
    /// Expected error bias from requested counts (issued minus expired).
    #[default]
    Balanced,
    /// Error bias from received counts only; ignores in-flight requests.
    Naive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub accuracy: Accuracy,
    pub budget: u64,
    pub policy: SelectionPolicy,
    /// Drives presentation-order randomization.
    pub seed: u64,
    /// Lifetime of an evaluation request, in the caller's time unit.
    pub request_ttl: u64,
}

impl EngineConfig {
    pub fn new(accuracy: Accuracy, budget: u64) -> Self {
        EngineConfig {
            accuracy,
            budget,
            policy: SelectionPolicy::Balanced,
            seed: 0,
            request_ttl: 600_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestId(pub u64);

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// An outstanding judgment assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationRequest {
    pub request_id: RequestId,
    pub left: String,
    pub right: String,
    pub left_stimulus: String,
    pub right_stimulus: String,
    /// Whether the left element's stimulus is presented first.
    pub left_first: bool,
    pub issued_at: u64,
    pub ttl: u64,
}

impl EvaluationRequest {
    pub fn deadline(&self) -> u64 {
        self.issued_at.saturating_add(self.ttl)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Determination {
    pub winner: usize,
    pub at_received: u64,
    pub at_win_rate: f64,
    /// Requests issued for this pair before the winner was fixed.
    pub issued_before: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairStatus {
    Active,
    Determined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairState {
    pub left: usize,
    pub right: usize,
    /// Merge node that owns this comparison.
    pub node: usize,
    pub tally: PairTally,
    /// Issued minus expired requests.
    pub requested: u64,
    /// All requests ever issued, expired ones included.
    pub issued: u64,
    pub determination: Option<Determination>,
    /// Submissions for requests issued before determination but received after it.
    pub late_submissions: u64,
}

impl PairState {
    pub fn status(&self) -> PairStatus {
        if self.determination.is_some() {
            PairStatus::Determined
        } else {
            PairStatus::Active
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Sorting,
    Refinement,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EngineWarning {
    /// `m · upper(n)` exceeds the budget, so convergence is not guaranteed.
    BudgetBelowWorstCase { worst_case: u64, budget: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JoinOutcome {
    Issued(EvaluationRequest),
    Done,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub pair: usize,
    pub winner: usize,
    pub at_received: u64,
    pub at_win_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SubmitOutcome {
    Accepted,
    Determined(Decision),
    /// The determination completed the root merge.
    Converged(Decision),
    RejectedDuplicate,
    RejectedUnknown,
}

impl SubmitOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(
            self,
            SubmitOutcome::Accepted | SubmitOutcome::Determined(_) | SubmitOutcome::Converged(_)
        )
    }

    pub fn decision(&self) -> Option<&Decision> {
        match self {
            SubmitOutcome::Determined(d) | SubmitOutcome::Converged(d) => Some(d),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestStatus {
    Outstanding,
    Submitted,
    Expired,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Pending {
    request: EvaluationRequest,
    pair: usize,
    /// Position of this request among the pair's issues.
    serial: u64,
}

/// Current order in ascending quality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedOrder {
    pub ids: Vec<String>,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Engine {
    config: EngineConfig,
    max_comparisons: u64,
    targets: TargetSet,
    pairs: Vec<PairState>,
    frontier: MergeFrontier,
    submitted_total: u64,
    outstanding: BTreeMap<RequestId, Pending>,
    expired: BTreeSet<RequestId>,
    next_request: u64,
    converged_at: Option<u64>,
}

fn register_pair(pairs: &mut Vec<PairState>, node: usize, left: usize, right: usize) -> usize {
    debug_assert!(
        !pairs.iter().any(|p| (p.left, p.right) == (left, right)),
        "pair compared twice"
    );
    pairs.push(PairState {
        left,
        right,
        node,
        tally: PairTally::default(),
        requested: 0,
        issued: 0,
        determination: None,
        late_submissions: 0,
    });
    pairs.len() - 1
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Engine {
    pub fn new(targets: TargetSet, config: EngineConfig) -> Result<Self, EngineError> {
        if config.budget == 0 {
            return Err(EngineError::ZeroBudget);
        }
        let mut pairs = Vec::new();
        let frontier = MergeFrontier::new(targets.len(), &mut |node, a, b| {
            register_pair(&mut pairs, node, a, b)
        });
        Ok(Engine {
            max_comparisons: config.accuracy.max_comparisons(),
            config,
            targets,
            pairs,
            frontier,
            submitted_total: 0,
            outstanding: BTreeMap::new(),
            expired: BTreeSet::new(),
            next_request: 0,
            converged_at: None,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn accuracy(&self) -> Accuracy {
        self.config.accuracy
    }

    pub fn max_comparisons(&self) -> u64 {
        self.max_comparisons
    }

    pub fn targets(&self) -> &TargetSet {
        &self.targets
    }

    pub fn pairs(&self) -> &[PairState] {
        &self.pairs
    }

    pub fn frontier(&self) -> &MergeFrontier {
        &self.frontier
    }

    pub fn pair_key(&self, pair: usize) -> String {
        let p = &self.pairs[pair];
        alloc::format!("{}:{}", self.targets.id(p.left), self.targets.id(p.right))
    }

    pub fn find_pair(&self, left: &str, right: &str) -> Option<usize> {
        let l = self.targets.index_of(left)?;
        let r = self.targets.index_of(right)?;
        self.pairs.iter().position(|p| (p.left, p.right) == (l, r))
    }

    pub fn submitted_total(&self) -> u64 {
        self.submitted_total
    }

    pub fn outstanding_count(&self) -> usize {
        self.outstanding.len()
    }

    pub fn outstanding(&self) -> impl Iterator<Item = &EvaluationRequest> {
        self.outstanding.values().map(|p| &p.request)
    }

    pub fn outstanding_request(&self, id: RequestId) -> Option<&EvaluationRequest> {
        self.outstanding.get(&id).map(|p| &p.request)
    }

    pub fn is_converged(&self) -> bool {
        self.frontier.is_complete()
    }

    /// Submissions accepted when the root merge completed.
    pub fn converged_at(&self) -> Option<u64> {
        self.converged_at
    }

    pub fn phase(&self) -> Phase {
        if self.submitted_total + self.outstanding.len() as u64 >= self.config.budget {
            Phase::Exhausted
        } else if self.frontier.is_complete() {
            Phase::Refinement
        } else {
            Phase::Sorting
        }
    }

    pub fn warnings(&self) -> Vec<EngineWarning> {
        let mut out = Vec::new();
        if let Ok(bounds) = stats::sort_complexity_bounds(self.targets.len() as u64) {
            let worst_case = self.max_comparisons.saturating_mul(bounds.upper);
            if worst_case > self.config.budget {
                out.push(EngineWarning::BudgetBelowWorstCase {
                    worst_case,
                    budget: self.config.budget,
                });
            }
        }
        out
    }

    /// Pairs currently eligible for new requests.
    pub fn eligible_pairs(&self) -> Vec<usize> {
        if self.frontier.is_complete() {
            (0..self.pairs.len())
                .filter(|&i| self.pairs[i].determination.is_some())
                .collect()
        } else {
            self.frontier.active_pairs().collect()
        }
    }

    fn selection_count(&self, pair: usize) -> u64 {
        let p = &self.pairs[pair];
        match self.config.policy {
            SelectionPolicy::Balanced => p.requested,
            SelectionPolicy::Naive => p.tally.received(),
        }
    }

    /// Selection score of a pair under the configured policy. The interval is
    /// clamped to 1/2, the value it takes at zero judgments: a wider interval
    /// on a win rate carries no extra information and would otherwise rank a
    /// pair with one request above an untouched one.
    pub fn expected_error_bias(&self, pair: usize) -> f64 {
        let count = self.selection_count(pair);
        let interval = self.config.accuracy.interval(count).min(0.5);
        stats::error_bias(interval, self.pairs[pair].tally.win_rate())
    }

    fn key_cmp(&self, a: usize, b: usize) -> Ordering {
        let (pa, pb) = (&self.pairs[a], &self.pairs[b]);
        self.targets
            .id(pa.left)
            .cmp(self.targets.id(pb.left))
            .then_with(|| self.targets.id(pa.right).cmp(self.targets.id(pb.right)))
    }

    /// The pair `on_join` would issue next: maximum expected error bias, then
    /// smallest selection count, then lexicographic pair key.
    pub fn select_pair(&self) -> Option<usize> {
        self.eligible_pairs().into_iter().min_by(|&a, &b| {
            let (sa, sb) = (self.expected_error_bias(a), self.expected_error_bias(b));
            sb.partial_cmp(&sa)
                .unwrap_or(Ordering::Equal)
                .then_with(|| self.selection_count(a).cmp(&self.selection_count(b)))
                .then_with(|| self.key_cmp(a, b))
        })
    }

    fn budget_left(&self) -> bool {
        self.submitted_total + (self.outstanding.len() as u64) < self.config.budget
    }

    pub fn on_join(&mut self, now: u64) -> JoinOutcome {
        if !self.budget_left() {
            return JoinOutcome::Done;
        }
        let Some(pair) = self.select_pair() else {
            return JoinOutcome::Done;
        };
        let request = self.build_request(pair, now);
        self.register_issue(pair, request.clone());
        JoinOutcome::Issued(request)
    }

    fn build_request(&self, pair: usize, now: u64) -> EvaluationRequest {
        let p = &self.pairs[pair];
        let (lt, rt) = (self.targets.get(p.left), self.targets.get(p.right));
        let turn = p.issued as usize;
        let id = self.next_request;
        EvaluationRequest {
            request_id: RequestId(id),
            left: lt.id.clone(),
            right: rt.id.clone(),
            left_stimulus: lt.stimuli[turn % lt.stimuli.len()].clone(),
            right_stimulus: rt.stimuli[turn % rt.stimuli.len()].clone(),
            left_first: mix64(self.config.seed ^ mix64(id)) & 1 == 0,
            issued_at: now,
            ttl: self.config.request_ttl,
        }
    }

    fn register_issue(&mut self, pair: usize, request: EvaluationRequest) {
        let p = &mut self.pairs[pair];
        let serial = p.issued;
        p.issued += 1;
        p.requested += 1;
        self.next_request = request.request_id.0 + 1;
        self.outstanding.insert(
            request.request_id,
            Pending {
                request,
                pair,
                serial,
            },
        );
    }

    /// Re-applies a recorded issue; the engine must have selected the same pair.
    pub(crate) fn apply_issue(&mut self, request: EvaluationRequest) -> Result<(), String> {
        if !self.budget_left() {
            return Err("issue beyond budget".into());
        }
        if request.request_id.0 != self.next_request {
            return Err(alloc::format!(
                "request id {} out of sequence (expected {})",
                request.request_id,
                RequestId(self.next_request)
            ));
        }
        let pair = self
            .find_pair(&request.left, &request.right)
            .ok_or_else(|| alloc::format!("unknown pair {}:{}", request.left, request.right))?;
        if self.select_pair() != Some(pair) {
            return Err(alloc::format!(
                "pair {}:{} is not the engine's selection",
                request.left,
                request.right
            ));
        }
        self.register_issue(pair, request);
        Ok(())
    }

    pub fn request_status(&self, id: RequestId) -> RequestStatus {
        if self.outstanding.contains_key(&id) {
            RequestStatus::Outstanding
        } else if self.expired.contains(&id) {
            RequestStatus::Expired
        } else if id.0 < self.next_request {
            RequestStatus::Submitted
        } else {
            RequestStatus::Unknown
        }
    }

    /// Records a judgment; `left_won` is the preference in pair orientation.
    pub fn on_submit(&mut self, id: RequestId, left_won: bool) -> SubmitOutcome {
        let Some(pending) = self.outstanding.remove(&id) else {
            return match self.request_status(id) {
                RequestStatus::Submitted => SubmitOutcome::RejectedDuplicate,
                _ => SubmitOutcome::RejectedUnknown,
            };
        };
        self.submitted_total += 1;
        let pair_idx = pending.pair;
        let pair = &mut self.pairs[pair_idx];
        pair.tally.record(left_won);

        if let Some(det) = &pair.determination {
            if pending.serial < det.issued_before {
                pair.late_submissions += 1;
            }
            return SubmitOutcome::Accepted;
        }

        let received = pair.tally.received();
        let win_rate = pair.tally.win_rate();
        let bias = stats::error_bias(self.config.accuracy.interval(received), win_rate);
        if bias > self.config.accuracy.epsilon() && received < self.max_comparisons {
            return SubmitOutcome::Accepted;
        }

        // ties go to the right element
        let winner = if win_rate > 0.5 {
            pair.left
        } else {
            pair.right
        };
        pair.determination = Some(Determination {
            winner,
            at_received: received,
            at_win_rate: win_rate,
            issued_before: pair.issued,
        });
        let node = pair.node;
        let decision = Decision {
            pair: pair_idx,
            winner,
            at_received: received,
            at_win_rate: win_rate,
        };

        let pairs = &mut self.pairs;
        let advance = self.frontier.advance(node, winner, &mut |node, a, b| {
            register_pair(pairs, node, a, b)
        });
        if advance == (Advance::Completed { root: true }) {
            self.converged_at = Some(self.submitted_total);
            SubmitOutcome::Converged(decision)
        } else {
            SubmitOutcome::Determined(decision)
        }
    }

    /// Releases an outstanding request. Returns false for unknown ids.
    pub fn on_expire(&mut self, id: RequestId) -> bool {
        let Some(pending) = self.outstanding.remove(&id) else {
            return false;
        };
        self.pairs[pending.pair].requested -= 1;
        self.expired.insert(id);
        true
    }

    /// Outstanding requests whose deadline has passed at `now`.
    pub fn expired_requests(&self, now: u64) -> Vec<RequestId> {
        self.outstanding
            .values()
            .filter(|p| p.request.deadline() <= now)
            .map(|p| p.request.request_id)
            .collect()
    }

    pub fn current_order_indices(&self) -> (Vec<usize>, bool) {
        self.frontier.order()
    }

    pub fn current_order(&self) -> RankedOrder {
        let (order, complete) = self.frontier.order();
        RankedOrder {
            ids: order
                .iter()
                .map(|&i| String::from(self.targets.id(i)))
                .collect(),
            complete,
        }
    }
}

#[cfg(test)]
mod tests;
