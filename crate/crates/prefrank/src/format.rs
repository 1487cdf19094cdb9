//! Human tables (two decimals) and CSV rows (full precision).

use std::fmt::Write as _;

use prefrank_core::report::{Report, ReportRow, Termination};
use prefrank_core::sim::SimReport;
use prefrank_core::stats;
use prefrank_core::{Accuracy, ComplexityBounds, StatError};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Plan {
    pub targets: u64,
    pub budget: u64,
    pub delta: f64,
    pub epsilon: f64,
    pub max_comparisons: u64,
    pub bounds: ComplexityBounds,
    /// `max_comparisons · upper`.
    pub worst_case: u64,
}

impl Plan {
    /// Plans from a budget, or checks a given `epsilon` against it.
    pub fn new(
        targets: u64,
        budget: u64,
        delta: f64,
        epsilon: Option<f64>,
    ) -> Result<Plan, StatError> {
        let bounds = stats::sort_complexity_bounds(targets)?;
        let epsilon = match epsilon {
            Some(e) => e,
            None => stats::plan_epsilon(budget, targets, delta)?,
        };
        let m = stats::max_comparisons(Accuracy::new(epsilon, delta)?);
        Ok(Plan {
            targets,
            budget,
            delta,
            epsilon,
            max_comparisons: m,
            bounds,
            worst_case: m.saturating_mul(bounds.upper),
        })
    }

    pub fn over_budget(&self) -> bool {
        self.worst_case > self.budget
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "targets          {}", self.targets);
        let _ = writeln!(s, "budget           {}", self.budget);
        let _ = writeln!(s, "delta            {}", self.delta);
        let _ = writeln!(s, "epsilon          {:.4}", self.epsilon);
        let _ = writeln!(s, "max comparisons  {}", self.max_comparisons);
        let _ = writeln!(
            s,
            "compared pairs   {}..={}",
            self.bounds.lower, self.bounds.upper
        );
        let _ = writeln!(s, "worst case       {}", self.worst_case);
        s
    }
}

fn f2(x: f64) -> String {
    format!("{x:.2}")
}

fn opt2(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), f2)
}

fn termination(t: Option<Termination>) -> &'static str {
    match t {
        Some(Termination::Early) => "early",
        Some(Termination::MaxLimit) => "max",
        None => "-",
    }
}

/// Renders rows as an aligned table; `*` marks significance, `!` a reversal.
pub fn table(rows: &[ReportRow]) -> String {
    let header = [
        "pair", "w", "r", "r_det", "p", "p_det", "c", "c_H", "eps", "eps_H", "p-value", "95% CI",
        "end", "winner",
    ];
    let mut lines: Vec<Vec<String>> = vec![header.iter().map(|h| h.to_string()).collect()];
    for r in rows {
        let mut pair = r.pair.clone();
        if r.significant {
            pair.push('*');
        }
        if r.reversal {
            pair.push('!');
        }
        lines.push(vec![
            pair,
            r.wins.to_string(),
            r.received.to_string(),
            r.determined_at
                .map_or_else(|| "-".into(), |v| v.to_string()),
            f2(r.win_rate),
            opt2(r.determined_win_rate),
            f2(r.c_hat),
            opt2(r.c_hat_hoeffding),
            f2(r.error_bias),
            opt2(r.error_bias_hoeffding),
            r.p_value.map_or_else(|| "-".into(), |p| format!("{p:.4}")),
            r.interval
                .map_or_else(|| "-".into(), |(lo, hi)| format!("[{lo:.2}, {hi:.2}]")),
            termination(r.termination).into(),
            r.winner.clone().unwrap_or_else(|| "-".into()),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            lines
                .iter()
                .map(|l| l[c].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for line in &lines {
        let cells: Vec<String> = line
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (cell, &w))| {
                if i == 0 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Flat CSV record; `None` becomes an empty field.
#[derive(Serialize)]
struct CsvRow<'a> {
    pair: &'a str,
    left: &'a str,
    right: &'a str,
    wins: u64,
    received: u64,
    determined_at: Option<u64>,
    win_rate: f64,
    determined_win_rate: Option<f64>,
    winner: Option<&'a str>,
    c_hat: f64,
    c_hat_hoeffding: Option<f64>,
    error_bias: f64,
    error_bias_hoeffding: Option<f64>,
    p_value: Option<f64>,
    significant: bool,
    ci_low: Option<f64>,
    ci_high: Option<f64>,
    termination: Option<Termination>,
    reversal: bool,
}

pub fn csv(rows: &[ReportRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        let (ci_low, ci_high) = r.interval.unzip();
        w.serialize(CsvRow {
            pair: &r.pair,
            left: &r.left,
            right: &r.right,
            wins: r.wins,
            received: r.received,
            determined_at: r.determined_at,
            win_rate: r.win_rate,
            determined_win_rate: r.determined_win_rate,
            winner: r.winner.as_deref(),
            c_hat: r.c_hat,
            c_hat_hoeffding: r.c_hat_hoeffding,
            error_bias: r.error_bias,
            error_bias_hoeffding: r.error_bias_hoeffding,
            p_value: r.p_value,
            significant: r.significant,
            ci_low,
            ci_high,
            termination: r.termination,
            reversal: r.reversal,
        })
        .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 fields")
}

pub fn report_text(report: &Report) -> String {
    let s = &report.summary;
    let mut out = String::new();
    let _ = writeln!(out, "order (worst to best): {}", report.order.join(" < "));
    let _ = writeln!(
        out,
        "converged: {}  submissions: {}/{}  compared pairs: {}",
        if report.complete {
            "yes"
        } else {
            "no (partial)"
        },
        s.submitted_total,
        s.budget,
        s.compared_pairs
    );
    if let Some(at) = s.convergence_at {
        let _ = writeln!(
            out,
            "convergence at: {at}  refinement submissions: {}",
            s.refinement_submissions
        );
    }
    let _ = writeln!(
        out,
        "early: {}  max-limit: {}  significant: {}  reversals: {}",
        s.early_terminations, s.max_limit_terminations, s.significant_pairs, s.reversals
    );
    out.push('\n');
    out.push_str(&table(&report.rows));
    out
}

pub fn sim_text(report: &SimReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "order (worst to best): {}", report.order.join(" < "));
    let _ = writeln!(
        out,
        "converged: {}  submissions: {}  compared pairs: {}",
        if report.converged { "yes" } else { "no" },
        report.total_submissions,
        report.compared_pairs
    );
    if let Some(at) = report.convergence_at {
        let _ = writeln!(
            out,
            "convergence at: {at}  refinement submissions: {}",
            report.refinement_submissions
        );
    }
    let _ = writeln!(
        out,
        "kendall tau: {:.2}  adjacent misorders: {}  reversals: {}  overshoot max/total: {}/{}",
        report.kendall_tau,
        report.adjacent_misorders,
        report.reversal_count,
        report.max_overshoot,
        report.total_overshoot
    );
    out.push('\n');
    out.push_str(&table(&report.rows));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> ReportRow {
        ReportRow {
            pair: "a:b".into(),
            left: "a".into(),
            right: "b".into(),
            wins: 9,
            received: 10,
            determined_at: Some(10),
            win_rate: 0.9,
            determined_win_rate: Some(0.9),
            winner: Some("a".into()),
            c_hat: 0.123456789,
            c_hat_hoeffding: None,
            error_bias: -0.276543211,
            error_bias_hoeffding: None,
            p_value: Some(0.0107421875),
            significant: true,
            interval: Some((0.5549851, 0.99747)),
            termination: Some(Termination::Early),
            reversal: false,
        }
    }

    #[test]
    fn table_rounds_and_marks() {
        let t = table(&[row()]);
        let line = t.lines().nth(1).unwrap();
        assert!(line.starts_with("a:b*"));
        assert!(line.contains(" 0.12 ") && line.contains("-0.28"));
        assert!(line.contains("[0.55, 1.00]"));
    }

    #[test]
    fn csv_keeps_precision() {
        let c = csv(&[row()]);
        let mut lines = c.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("pair,left,right,wins,received"));
        let line = lines.next().unwrap();
        assert!(line.contains("0.123456789"));
        assert!(line.contains("0.0107421875"));
        assert!(line.contains(",early,"));
        assert_eq!(line.split(',').count(), header.split(',').count());
    }

    #[test]
    fn plan_reference_configuration() {
        let p = Plan::new(27, 24960, 0.05, None).unwrap();
        assert_eq!(p.max_comparisons, 240);
        assert!((p.epsilon - 0.0877).abs() < 5e-4);
        assert!(!p.over_budget());
        let p = Plan::new(27, 24960, 0.05, Some(0.05)).unwrap();
        assert!(p.over_budget());
    }
}
