//! Confidence intervals, budget planning, and post-hoc tests for pairwise
//! preference counts.
//!
//! All logarithms are natural. Every function here is pure.

use serde::{Deserialize, Serialize};

use crate::error::StatError;

/// Tolerance bias and error probability for a single pairwise comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    epsilon: f64,
    delta: f64,
}

impl Accuracy {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self, StatError> {
        if !(epsilon > 0.0 && epsilon <= 0.5) {
            return Err(StatError::Epsilon(epsilon));
        }
        check_delta(delta)?;
        Ok(Accuracy { epsilon, delta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Early-termination interval at `received` judgments.
    pub fn interval(&self, received: u64) -> f64 {
        c_hat_unchecked(received, self.delta)
    }

    /// Plain Hoeffding interval; `None` for an unevaluated pair.
    pub fn hoeffding_interval(&self, received: u64) -> Option<f64> {
        (received > 0).then(|| c_hat_hoeffding_unchecked(received, self.delta))
    }

    pub fn max_comparisons(&self) -> u64 {
        max_comparisons(*self)
    }
}

/// Wins of the left element over the right, out of `received` judgments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairTally {
    wins: u64,
    received: u64,
}

impl PairTally {
    pub fn new(wins: u64, received: u64) -> Result<Self, StatError> {
        if wins > received {
            return Err(StatError::Tally { wins, received });
        }
        Ok(PairTally { wins, received })
    }

    pub fn wins(&self) -> u64 {
        self.wins
    }

    pub fn received(&self) -> u64 {
        self.received
    }

    /// `wins / received`, or 1/2 before any judgment arrives.
    pub fn win_rate(&self) -> f64 {
        if self.received == 0 {
            0.5
        } else {
            self.wins as f64 / self.received as f64
        }
    }

    /// Apply one judgment; `left_won` is the binary preference in pair orientation.
    pub fn record(&mut self, left_won: bool) {
        self.wins += u64::from(left_won);
        self.received += 1;
    }
}

/// Best- and worst-case number of compared pairs for merge sort on `n` items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityBounds {
    pub lower: u64,
    pub upper: u64,
}

fn check_delta(delta: f64) -> Result<(), StatError> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(StatError::Delta(delta))
    }
}

fn c_hat_unchecked(received: u64, delta: f64) -> f64 {
    if received == 0 {
        return 0.5;
    }
    let r = received as f64;
    libm::sqrt(libm::log(4.0 * r * r / delta) / (2.0 * r))
}

fn c_hat_hoeffding_unchecked(received: u64, delta: f64) -> f64 {
    libm::sqrt(libm::log(2.0 / delta) / (2.0 * received as f64))
}

/// Anytime-valid interval used for early termination:
/// `sqrt(ln(4r²/δ) / 2r)`, and exactly 1/2 at `r = 0`.
pub fn c_hat(received: u64, delta: f64) -> Result<f64, StatError> {
    check_delta(delta)?;
    Ok(c_hat_unchecked(received, delta))
}

/// Fixed-sample Hoeffding interval `sqrt(ln(2/δ) / 2r)`.
pub fn c_hat_hoeffding(received: u64, delta: f64) -> Result<f64, StatError> {
    check_delta(delta)?;
    if received == 0 {
        return Err(StatError::NoJudgments);
    }
    Ok(c_hat_hoeffding_unchecked(received, delta))
}

/// Interval minus the decision margin `|p̂ − 1/2|`. Negative values mean the
/// margin already exceeds the interval.
pub fn error_bias(interval: f64, win_rate: f64) -> f64 {
    interval - libm::fabs(win_rate - 0.5)
}

/// Judgment cap per pair: `ceil(ln(2/δ) / 2ε²)`.
pub fn max_comparisons(accuracy: Accuracy) -> u64 {
    let eps = accuracy.epsilon;
    libm::ceil(libm::log(2.0 / accuracy.delta) / (2.0 * eps * eps)) as u64
}

fn worst_case(n: u64) -> u64 {
    if n <= 1 {
        return 0;
    }
    let half = n / 2;
    worst_case(n - half) + worst_case(half) + n - 1
}

fn best_case(n: u64) -> u64 {
    if n <= 1 {
        return 0;
    }
    let half = n / 2;
    best_case(n - half) + best_case(half) + half
}

/// Merge-sort comparison counts from the recursions
/// `T(n) ≥ T(⌈n/2⌉) + T(⌊n/2⌋) + ⌊n/2⌋` and `T(n) ≤ T(⌈n/2⌉) + T(⌊n/2⌋) + n − 1`.
pub fn sort_complexity_bounds(n: u64) -> Result<ComplexityBounds, StatError> {
    if n == 0 {
        return Err(StatError::EmptySet);
    }
    Ok(ComplexityBounds {
        lower: best_case(n),
        upper: worst_case(n),
    })
}

fn next_up(x: f64) -> f64 {
    f64::from_bits(x.to_bits() + 1)
}

/// Smallest tolerance bias whose worst-case volume `m · upper(n)` fits in
/// `budget`. The result is capped at 1/2; below `8 · upper(n)` (at δ = 0.05)
/// even ε = 1/2 cannot guarantee convergence and the cap is returned.
pub fn plan_epsilon(budget: u64, n: u64, delta: f64) -> Result<f64, StatError> {
    check_delta(delta)?;
    if n < 2 {
        return Err(StatError::TooFewTargets(n));
    }
    let upper = sort_complexity_bounds(n)?.upper;
    if budget < upper {
        return Err(StatError::InfeasibleBudget {
            budget,
            required: upper,
        });
    }
    let per_pair = budget / upper;
    let log_term = libm::log(2.0 / delta);
    let mut eps = libm::sqrt(log_term / (2.0 * per_pair as f64));
    if eps >= 0.5 {
        return Ok(0.5);
    }
    // ceil() in max_comparisons can land one above per_pair through rounding.
    while libm::ceil(log_term / (2.0 * eps * eps)) as u64 > per_pair {
        eps = next_up(eps);
    }
    Ok(eps)
}

/// `ln C(n, k)` for `k ≤ n`.
fn ln_choose(n: u64, k: u64) -> f64 {
    let n = n as f64;
    let k = k as f64;
    libm::lgamma(n + 1.0) - libm::lgamma(k + 1.0) - libm::lgamma(n - k + 1.0)
}

fn ln_pmf(n: u64, k: u64, ln_choose_nk: f64, p: f64) -> f64 {
    let mut out = ln_choose_nk;
    if k > 0 {
        out += k as f64 * libm::log(p);
    }
    if n > k {
        out += (n - k) as f64 * libm::log1p(-p);
    }
    out
}

/// `P[X ≥ k]` for `X ~ Binomial(n, p)`.
pub(crate) fn binomial_upper_tail(n: u64, k: u64, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let mut lc = ln_choose(n, k);
    let mut total = 0.0;
    for i in k..=n {
        total += libm::exp(ln_pmf(n, i, lc, p));
        if i < n {
            lc += libm::log((n - i) as f64) - libm::log((i + 1) as f64);
        }
    }
    total.min(1.0)
}

/// `P[X ≤ k]` for `X ~ Binomial(n, p)`.
pub(crate) fn binomial_lower_tail(n: u64, k: u64, p: f64) -> f64 {
    if k >= n {
        return 1.0;
    }
    // P[X ≤ k | p] = P[Y ≥ n − k | 1 − p] with Y = n − X.
    binomial_upper_tail(n, n - k, 1.0 - p)
}

/// One-sided exact test against a fair coin, in the direction of the observed
/// deviation: `P[X ≥ w]` when `w/r ≥ 1/2`, else `P[X ≤ w]`.
pub fn binomial_test_one_sided(tally: PairTally) -> Result<f64, StatError> {
    let (w, r) = (tally.wins, tally.received);
    if r == 0 {
        return Err(StatError::NoJudgments);
    }
    if 2 * w >= r {
        Ok(binomial_upper_tail(r, w, 0.5))
    } else {
        Ok(binomial_lower_tail(r, w, 0.5))
    }
}

const BISECTION_TOLERANCE: f64 = 1e-12;

/// Finds `p` in [0, 1] with `f(p) = target`, `f` monotone with the given direction.
fn bisect(target: f64, increasing: bool, f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > BISECTION_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        let below = f(mid) < target;
        if below == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exact two-sided binomial interval with `(1 − confidence)/2` in each tail.
pub fn clopper_pearson(tally: PairTally, confidence: f64) -> Result<(f64, f64), StatError> {
    let (w, r) = (tally.wins, tally.received);
    if r == 0 {
        return Err(StatError::NoJudgments);
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(StatError::Confidence(confidence));
    }
    let tail = (1.0 - confidence) / 2.0;
    let lower = if w == 0 {
        0.0
    } else {
        bisect(tail, true, |p| binomial_upper_tail(r, w, p))
    };
    let upper = if w == r {
        1.0
    } else {
        bisect(tail, false, |p| binomial_lower_tail(r, w, p))
    };
    Ok((lower, upper))
}
