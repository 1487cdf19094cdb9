//! Per-pair result rows and run summaries, all recomputable from tallies and
//! the accuracy configuration.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::engine::{Engine, PairState};
use crate::stats::{self, PairTally};

/// Significance level for the one-sided binomial test.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;
/// Level of the reported Clopper–Pearson interval.
pub const INTERVAL_CONFIDENCE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// Error bias fell within the tolerance before the cap.
    Early,
    MaxLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub pair: String,
    pub left: String,
    pub right: String,
    pub wins: u64,
    /// Final received count (r̄).
    pub received: u64,
    /// Received count at determination (r̲).
    pub determined_at: Option<u64>,
    /// Final win rate of the left element (p̄).
    pub win_rate: f64,
    /// Win rate at determination (p̲).
    pub determined_win_rate: Option<f64>,
    pub winner: Option<String>,
    pub c_hat: f64,
    pub c_hat_hoeffding: Option<f64>,
    pub error_bias: f64,
    pub error_bias_hoeffding: Option<f64>,
    pub p_value: Option<f64>,
    pub significant: bool,
    pub interval: Option<(f64, f64)>,
    pub termination: Option<Termination>,
    /// Final win rate sits on the other side of 1/2 from the determination-time rate.
    pub reversal: bool,
}

impl ReportRow {
    pub fn from_pair(engine: &Engine, index: usize) -> ReportRow {
        let pair: &PairState = &engine.pairs()[index];
        let acc = engine.accuracy();
        let tally: PairTally = pair.tally;
        let win_rate = tally.win_rate();
        let c_hat = acc.interval(tally.received());
        let c_hat_hoeffding = acc.hoeffding_interval(tally.received());
        let det = pair.determination.as_ref();
        let reversal = det.is_some_and(|d| (win_rate - 0.5) * (d.at_win_rate - 0.5) < 0.0);
        let ids = engine.targets();
        ReportRow {
            pair: engine.pair_key(index),
            left: ids.id(pair.left).into(),
            right: ids.id(pair.right).into(),
            wins: tally.wins(),
            received: tally.received(),
            determined_at: det.map(|d| d.at_received),
            win_rate,
            determined_win_rate: det.map(|d| d.at_win_rate),
            winner: det.map(|d| ids.id(d.winner).into()),
            c_hat,
            c_hat_hoeffding,
            error_bias: stats::error_bias(c_hat, win_rate),
            error_bias_hoeffding: c_hat_hoeffding.map(|c| stats::error_bias(c, win_rate)),
            p_value: stats::binomial_test_one_sided(tally).ok(),
            significant: stats::binomial_test_one_sided(tally)
                .is_ok_and(|p| p < SIGNIFICANCE_LEVEL),
            interval: stats::clopper_pearson(tally, INTERVAL_CONFIDENCE).ok(),
            termination: det.map(|d| {
                if d.at_received < engine.max_comparisons() {
                    Termination::Early
                } else {
                    Termination::MaxLimit
                }
            }),
            reversal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub targets: usize,
    pub budget: u64,
    pub max_comparisons: u64,
    pub submitted_total: u64,
    /// Pairs with a determined winner.
    pub compared_pairs: usize,
    pub converged: bool,
    pub convergence_at: Option<u64>,
    /// Submissions accepted after convergence.
    pub refinement_submissions: u64,
    pub early_terminations: usize,
    pub max_limit_terminations: usize,
    pub significant_pairs: usize,
    pub reversals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Ascending quality.
    pub order: Vec<String>,
    pub complete: bool,
    pub rows: Vec<ReportRow>,
    pub summary: Summary,
}

/// Rows for every pair that has received at least one judgment, in creation order.
pub fn rows(engine: &Engine) -> Vec<ReportRow> {
    (0..engine.pairs().len())
        .filter(|&i| engine.pairs()[i].tally.received() > 0)
        .map(|i| ReportRow::from_pair(engine, i))
        .collect()
}

pub fn build(engine: &Engine) -> Report {
    let rows = rows(engine);
    let order = engine.current_order();
    let count = |t: Termination| rows.iter().filter(|r| r.termination == Some(t)).count();
    let summary = Summary {
        targets: engine.targets().len(),
        budget: engine.config().budget,
        max_comparisons: engine.max_comparisons(),
        submitted_total: engine.submitted_total(),
        compared_pairs: engine
            .pairs()
            .iter()
            .filter(|p| p.determination.is_some())
            .count(),
        converged: order.complete,
        convergence_at: engine.converged_at(),
        refinement_submissions: engine
            .converged_at()
            .map_or(0, |c| engine.submitted_total() - c),
        early_terminations: count(Termination::Early),
        max_limit_terminations: count(Termination::MaxLimit),
        significant_pairs: rows.iter().filter(|r| r.significant).count(),
        reversals: rows.iter().filter(|r| r.reversal).count(),
    };
    Report {
        order: order.ids,
        complete: order.complete,
        rows,
        summary,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{EngineConfig, JoinOutcome, TargetSet};
    use crate::stats::Accuracy;

    fn engine() -> Engine {
        let targets = TargetSet::from_ids(["a", "b"]).unwrap();
        let acc = Accuracy::new(0.0877, 0.05).unwrap();
        Engine::new(targets, EngineConfig::new(acc, 1000)).unwrap()
    }

    fn feed(e: &mut Engine, bits: impl IntoIterator<Item = bool>) {
        for b in bits {
            let JoinOutcome::Issued(r) = e.on_join(0) else {
                panic!()
            };
            e.on_submit(r.request_id, b);
        }
    }

    #[test]
    fn empty_engine_has_empty_table() {
        let r = build(&engine());
        assert!(r.rows.is_empty());
        assert_eq!(r.summary.compared_pairs, 0);
        assert_eq!(r.summary.submitted_total, 0);
        assert!(!r.complete);
    }

    #[test]
    fn early_termination_row() {
        let mut e = engine();
        feed(&mut e, core::iter::repeat_n(true, 14));
        let r = build(&e);
        let row = &r.rows[0];
        assert_eq!(row.determined_at, Some(14));
        assert_eq!(row.determined_win_rate, Some(1.0));
        assert_eq!(row.termination, Some(Termination::Early));
        assert!(row.significant);
        assert!(!row.reversal);
        assert_eq!(r.summary.refinement_submissions, 0);
        assert_eq!(r.order, ["b", "a"]);
    }

    #[test]
    fn reversal_and_significance_flags() {
        let mut e = engine();
        feed(&mut e, core::iter::repeat_n(true, 14));
        // refinement data pulling p̄ below 1/2: 14 + 6 wins out of 14 + 30
        feed(&mut e, (0..30).map(|k| k < 6));
        let row = &build(&e).rows[0];
        assert_eq!(row.received, 44);
        assert!(row.win_rate < 0.5);
        assert!(row.reversal);

        let mut e = engine();
        feed(&mut e, (0..10).map(|k| k < 9));
        let row = &build(&e).rows[0];
        assert!(row.significant);
        assert!((row.p_value.unwrap() - 0.0107).abs() < 1e-4);

        let mut e = engine();
        feed(&mut e, (0..10).map(|k| k % 2 == 0));
        assert!(!build(&e).rows[0].significant);
    }
}
