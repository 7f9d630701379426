//! Estimators and intervals used by the query evaluator.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::beta::beta_reg;

/// Sample mean and (n-1)-normalised standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Two-sided Student-t interval for the mean. Needs at least two samples.
pub fn student_t_ci(mean: f64, std: f64, n: usize, level: f64) -> Option<ConfidenceInterval> {
    if n < 2 {
        return None;
    }
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).ok()?;
    let q = t.inverse_cdf(0.5 + level / 2.0);
    let half = q * std / (n as f64).sqrt();
    Some(ConfidenceInterval { lo: mean - half, hi: mean + half, level })
}

/// Smallest `x` in `[0, 1]` with `I_x(a, b) >= p`, by bisection.
fn beta_quantile(p: f64, a: f64, b: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Exact binomial interval for `k` successes out of `n` at confidence `1 - alpha`.
pub fn clopper_pearson(k: u64, n: u64, alpha: f64) -> ConfidenceInterval {
    assert!(n > 0 && k <= n, "clopper_pearson needs 0 <= k <= n, n > 0");
    let (k, nf) = (k as f64, n as f64);
    let lo = if k == 0.0 { 0.0 } else { beta_quantile(alpha / 2.0, k, nf - k + 1.0) };
    let hi = if k == nf { 1.0 } else { beta_quantile(1.0 - alpha / 2.0, k + 1.0, nf - k) };
    ConfidenceInterval { lo, hi, level: 1.0 - alpha }
}

/// Runs needed so that `P(|p̂ - p| > epsilon) <= alpha` by the Chernoff-Hoeffding bound.
pub fn chernoff_runs(epsilon: f64, alpha: f64) -> u64 {
    assert!(epsilon > 0.0 && alpha > 0.0 && alpha < 1.0);
    ((2.0 / alpha).ln() / (2.0 * epsilon * epsilon)).ceil() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    /// `(mean(a) - mean(b)) / se`.
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// One-sided p-value for `mean(a) < mean(b)`.
    pub p_less: f64,
}

/// Welch's unequal-variance t-test. `None` when either sample has fewer than
/// two values or both variances vanish.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Option<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (ma, sa) = mean_std(a);
    let (mb, sb) = mean_std(b);
    let (va, vb) = (sa * sa / a.len() as f64, sb * sb / b.len() as f64);
    let se2 = va + vb;
    if se2 <= 0.0 {
        return None;
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (va * va / (a.len() - 1) as f64 + vb * vb / (b.len() - 1) as f64);
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some(WelchTest { t, df, p_value: 2.0 * dist.cdf(-t.abs()), p_less: dist.cdf(t) })
}
