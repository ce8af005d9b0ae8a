use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-sided confidence interval on a Bernoulli rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBound {
    pub observed: f64,
    pub trials: f64,
    pub lower_rate: f64,
    pub upper_rate: f64,
    pub epsilon_share: f64,
}

impl ConfidenceBound {
    pub fn rate(&self) -> f64 {
        if self.trials > 0.0 {
            self.observed / self.trials
        } else {
            0.0
        }
    }

    /// A zero-width bound at the observed rate, for expectation-value runs.
    pub fn exact(observed: f64, trials: f64) -> Self {
        let r = if trials > 0.0 { observed / trials } else { 0.0 };
        ConfidenceBound {
            observed,
            trials,
            lower_rate: r,
            upper_rate: r,
            epsilon_share: 0.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.upper_rate - self.lower_rate
    }
}

/// Multiplicative Chernoff interval on the expected count behind `observed`
/// successes out of `trials`, each side failing with probability at most
/// `epsilon_share / 2`.
///
/// Counts are reals so that re-weighted desk-scale statistics can be passed
/// straight through.
pub fn fluctuation_interval(observed: f64, trials: f64, epsilon_share: f64) -> Result<ConfidenceBound> {
    if !(trials >= 1.0 && trials.is_finite()) {
        return Err(Error::domain("trials", trials, "need trials >= 1"));
    }
    if !(observed >= 0.0 && observed <= trials) {
        return Err(Error::domain("observed", observed, "need 0 <= observed <= trials"));
    }
    if !(epsilon_share > 0.0 && epsilon_share < 1.0) {
        return Err(Error::domain("epsilon_share", epsilon_share, "need 0 < epsilon_share < 1"));
    }
    let k = observed;
    let l = (2.0 / epsilon_share).ln();
    let lower = (((2.0 * k + l) - (8.0 * k * l + l * l).sqrt()) / 2.0).max(0.0);
    let upper = k + l + (l * l + 2.0 * k * l).sqrt();
    Ok(ConfidenceBound {
        observed,
        trials,
        lower_rate: (lower / trials).clamp(0.0, 1.0),
        upper_rate: (upper / trials).clamp(0.0, 1.0),
        epsilon_share,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{Beta, ContinuousCDF};

    #[test]
    fn edges_clamp() {
        let b = fluctuation_interval(0.0, 1e6, 1e-10).unwrap();
        assert_eq!(b.lower_rate, 0.0);
        assert!(b.upper_rate > 0.0);
        let b = fluctuation_interval(500.0, 500.0, 1e-10).unwrap();
        assert_eq!(b.upper_rate, 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(fluctuation_interval(5.0, 4.0, 0.1).is_err());
        assert!(fluctuation_interval(-1.0, 4.0, 0.1).is_err());
        assert!(fluctuation_interval(1.0, 0.0, 0.1).is_err());
        assert!(fluctuation_interval(1.0, 4.0, 0.0).is_err());
        assert!(fluctuation_interval(1.0, 4.0, 1.0).is_err());
    }

    /// Width against the Gaussian envelope: at least ±6.6σ, at most twice
    /// that.
    #[test]
    fn gaussian_width_envelope() {
        let (k, n, eps) = (1e4, 1e8, 1e-10);
        let b = fluctuation_interval(k, n, eps).unwrap();
        assert!(b.lower_rate < 1e-4 && 1e-4 < b.upper_rate);
        let sigma = (k * (1.0 - k / n)).sqrt();
        let gauss = 2.0 * 6.6 * sigma / n;
        assert!(b.width() >= gauss, "{} < {gauss}", b.width());
        assert!(b.width() <= 2.0 * gauss, "{} > {}", b.width(), 2.0 * gauss);
    }

    /// Exact Clopper-Pearson interval at the same two-sided level.
    fn clopper_pearson(k: u64, n: u64, eps: f64) -> (f64, f64) {
        let lo = if k == 0 {
            0.0
        } else {
            Beta::new(k as f64, (n - k + 1) as f64).unwrap().inverse_cdf(eps / 2.0)
        };
        let hi = if k == n {
            1.0
        } else {
            Beta::new((k + 1) as f64, (n - k) as f64).unwrap().inverse_cdf(1.0 - eps / 2.0)
        };
        (lo, hi)
    }

    #[test]
    fn contains_exact_binomial_interval() {
        for &(k, n) in &[(0u64, 50u64), (3, 50), (25, 50), (10, 1000), (200, 5000), (1000, 100_000)] {
            for &eps in &[1e-2, 1e-4, 1e-6] {
                let b = fluctuation_interval(k as f64, n as f64, eps).unwrap();
                let (lo, hi) = clopper_pearson(k, n, eps);
                assert!(b.lower_rate <= lo + 1e-12, "k={k} n={n} eps={eps}: {} > {lo}", b.lower_rate);
                assert!(b.upper_rate >= hi - 1e-12, "k={k} n={n} eps={eps}: {} < {hi}", b.upper_rate);
            }
        }
    }

    proptest! {
        #[test]
        fn interval_contains_observed_rate(k in 0u64..100_000, extra in 0u64..1_000_000, eps in 1e-12f64..0.5) {
            let n = (k + extra).max(1) as f64;
            let b = fluctuation_interval(k as f64, n, eps).unwrap();
            prop_assert!(b.lower_rate <= b.rate() + 1e-15);
            prop_assert!(b.rate() <= b.upper_rate + 1e-15);
        }

        #[test]
        fn tightens_with_more_trials(rate in 1e-5f64..0.5, n in 1000.0f64..1e7, eps in 1e-12f64..0.1) {
            let a = fluctuation_interval(rate * n, n, eps).unwrap();
            let b = fluctuation_interval(rate * n * 4.0, n * 4.0, eps).unwrap();
            prop_assert!(b.width() <= a.width() + 1e-15);
        }
    }
}
