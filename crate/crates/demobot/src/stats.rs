//! Exact binomial interval and two-proportion test for success counts.

use crate::error::{Error, Result};
use statrs::distribution::{Discrete, Hypergeometric};
use statrs::function::beta::beta_reg;

/// Clopper-Pearson interval for `successes` out of `trials` at confidence `1 - alpha`.
pub fn clopper_pearson(successes: u64, trials: u64, alpha: f64) -> Result<(f64, f64)> {
    if trials == 0 || successes > trials {
        return Err(Error::Config(format!("invalid binomial count {successes}/{trials}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha {alpha} is not in (0, 1)")));
    }
    let (k, n) = (successes as f64, trials as f64);
    let lo = if successes == 0 {
        0.0
    } else {
        beta_quantile(k, n - k + 1.0, alpha / 2.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        beta_quantile(k + 1.0, n - k, 1.0 - alpha / 2.0)
    };
    Ok((lo, hi))
}

/// Quantile of Beta(a, b) by bisection on the regularized incomplete beta function.
fn beta_quantile(a: f64, b: f64, q: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Two-sided Fisher exact test (conditional on the total success count) for
/// `a / n` against `b / n`.
///
/// The p-value sums the probabilities of all tables no more likely than the
/// observed one, with a relative tolerance of 1e-7 for ties.
pub fn fisher_exact(a: u64, n_a: u64, b: u64, n_b: u64) -> Result<f64> {
    if a > n_a || b > n_b || n_a == 0 || n_b == 0 {
        return Err(Error::Config(format!("invalid counts {a}/{n_a} and {b}/{n_b}")));
    }
    let total = n_a + n_b;
    let k = a + b;
    if k == 0 || k == total {
        return Ok(1.0);
    }
    let h = Hypergeometric::new(total, n_a, k).map_err(|e| Error::Invariant(e.to_string()))?;
    let observed = h.pmf(a);
    let lo = k.saturating_sub(n_b);
    let hi = k.min(n_a);
    let p: f64 = (lo..=hi)
        .map(|x| h.pmf(x))
        .filter(|&p| p <= observed * (1.0 + 1e-7))
        .sum();
    Ok(p.min(1.0))
}
