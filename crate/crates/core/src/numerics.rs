//! Scalar numerics shared by every policy: Bernoulli KL divergence, the
//! KL-UCB index solver and Beta posterior sampling.

use std::fmt;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance of the KL-UCB bisection.
pub const KLUCB_TOLERANCE: f64 = 1e-9;
/// Iteration cap of the KL-UCB bisection.
pub const KLUCB_MAX_ITERATIONS: usize = 200;

/// A real number in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub const ZERO: Probability = Probability(0.0);
    pub const ONE: Probability = Probability(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Probability(value))
        } else {
            Err(Error::InvalidProbability(value))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Probability::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// KL divergence between Bernoulli(`p`) and Bernoulli(`q`).
///
/// Uses `0 log(0/x) = 0`. The result is `+inf` whenever `q` sits on the
/// boundary `{0, 1}` and differs from `p`. Both arguments must lie in `[0, 1]`.
#[inline]
pub fn kl_bernoulli(p: f64, q: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&q));
    if p == q {
        return 0.0;
    }
    let mut kl = 0.0;
    if p > 0.0 {
        if q == 0.0 {
            return f64::INFINITY;
        }
        kl += p * (p / q).ln();
    }
    if p < 1.0 {
        if q == 1.0 {
            return f64::INFINITY;
        }
        kl += (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
    }
    // rounding can leave a tiny negative value when q is very close to p
    kl.max(0.0)
}

/// Largest `q` in `[mean, 1]` with `pulls * KL(mean, q) <= budget`.
///
/// Solved by bisection to [`KLUCB_TOLERANCE`]; the returned value is the
/// feasible end of the final bracket, so the constraint always holds.
pub fn klucb_index(mean: f64, pulls: u64, budget: f64) -> Result<f64> {
    if pulls == 0 {
        return Err(Error::ZeroPulls);
    }
    Ok(klucb_index_unchecked(mean, pulls, budget))
}

#[inline]
pub(crate) fn klucb_index_unchecked(mean: f64, pulls: u64, budget: f64) -> f64 {
    debug_assert!(pulls > 0 && budget >= 0.0);
    if mean >= 1.0 {
        return 1.0;
    }
    let level = budget / pulls as f64;
    if level <= 0.0 {
        return mean;
    }
    let (mut lo, mut hi) = (mean, 1.0);
    for _ in 0..KLUCB_MAX_ITERATIONS {
        if hi - lo <= KLUCB_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if kl_bernoulli(mean, mid) <= level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Beta posterior of a Bernoulli mean under a uniform prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaPosterior {
    alpha: f64,
    beta: f64,
}

impl BetaPosterior {
    /// `Beta(1 + successes, 1 + pulls - successes)`.
    pub fn from_counts(successes: u64, pulls: u64) -> Result<Self> {
        if successes > pulls {
            return Err(Error::InconsistentCounts { successes, pulls });
        }
        Ok(Self::from_counts_unchecked(successes, pulls))
    }

    #[inline]
    pub(crate) fn from_counts_unchecked(successes: u64, pulls: u64) -> Self {
        BetaPosterior {
            alpha: 1.0 + successes as f64,
            beta: 1.0 + (pulls - successes) as f64,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// One Thompson sample from `posterior`.
#[inline]
pub fn sample_beta<R: Rng + ?Sized>(posterior: BetaPosterior, rng: &mut R) -> f64 {
    // alpha, beta >= 1 by construction, so the distribution is always valid
    Beta::new(posterior.alpha, posterior.beta)
        .expect("posterior parameters are at least 1")
        .sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kl_examples() {
        assert_eq!(kl_bernoulli(0.5, 0.5), 0.0);
        assert_abs_diff_eq!(
            kl_bernoulli(0.8, 0.9),
            0.044_403_007_586_882_3,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            kl_bernoulli(0.0, 0.5),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        assert_eq!(kl_bernoulli(0.3, 1.0), f64::INFINITY);
        assert_eq!(kl_bernoulli(0.3, 0.0), f64::INFINITY);
        assert_eq!(kl_bernoulli(1.0, 1.0), 0.0);
        assert_eq!(kl_bernoulli(0.0, 0.0), 0.0);
    }

    #[test]
    fn kl_is_asymmetric() {
        assert!((kl_bernoulli(0.1, 0.9) - kl_bernoulli(0.9, 0.2)).abs() > 1e-3);
        assert!((kl_bernoulli(0.2, 0.5) - kl_bernoulli(0.5, 0.2)).abs() > 1e-3);
    }

    #[test]
    fn kl_nonnegative_and_zero_only_on_diagonal() {
        for i in 0..=100 {
            for j in 0..=100 {
                let (p, q) = (i as f64 / 100.0, j as f64 / 100.0);
                let kl = kl_bernoulli(p, q);
                assert!(kl >= 0.0);
                assert_eq!(kl == 0.0, i == j, "p={p} q={q}");
            }
        }
    }

    #[test]
    fn kl_convex_and_increasing_above_p() {
        let h = 1e-3;
        for i in 1..99 {
            let p = i as f64 / 100.0;
            let mut q = p + h;
            while q + h < 1.0 {
                let (a, b, c) = (
                    kl_bernoulli(p, q - h),
                    kl_bernoulli(p, q),
                    kl_bernoulli(p, q + h),
                );
                assert!(c > b, "not increasing at p={p} q={q}");
                assert!(a + c - 2.0 * b >= -1e-12, "not convex at p={p} q={q}");
                q += 7.0 * h;
            }
        }
    }

    #[test]
    fn klucb_boundaries() {
        assert_eq!(klucb_index(0.5, 10, 0.0).unwrap(), 0.5);
        for budget in [0.0, 0.1, 5.0, 1e6] {
            assert_eq!(klucb_index(1.0, 5, budget).unwrap(), 1.0);
        }
        assert!(matches!(klucb_index(0.5, 0, 1.0), Err(Error::ZeroPulls)));
        // zero mean with a huge budget approaches 1
        assert_abs_diff_eq!(klucb_index(0.0, 1, 100.0).unwrap(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn klucb_matches_grid_search() {
        // grid oracle frozen from q in {0, 1e-6, ..., 1}
        let q = klucb_index(0.2, 10, 100f64.ln()).unwrap();
        let mut best = 0.2;
        let level = 100f64.ln();
        for k in 200_000..=1_000_000u32 {
            let cand = k as f64 * 1e-6;
            if 10.0 * kl_bernoulli(0.2, cand) <= level {
                best = cand;
            }
        }
        assert_abs_diff_eq!(q, best, epsilon = 1e-5);
    }

    #[test]
    fn klucb_constraint_is_tight() {
        for &(mean, pulls, budget) in &[
            (0.1, 3u64, 1.0),
            (0.5, 40, 2.3),
            (0.95, 1000, 9.0),
            (0.0, 7, 0.5),
        ] {
            let q = klucb_index(mean, pulls, budget).unwrap();
            assert!(pulls as f64 * kl_bernoulli(mean, q) <= budget);
            if q + 1e-6 <= 1.0 {
                assert!(pulls as f64 * kl_bernoulli(mean, q + 1e-6) > budget);
            }
        }
    }

    #[test]
    fn posterior_from_counts() {
        let post = BetaPosterior::from_counts(90, 100).unwrap();
        assert_eq!((post.alpha(), post.beta()), (91.0, 11.0));
        assert!(BetaPosterior::from_counts(3, 2).is_err());
    }

    #[test]
    fn beta_sample_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (s, t, expected) in [(0u64, 0u64, 0.5), (90, 100, 91.0 / 102.0)] {
            let post = BetaPosterior::from_counts(s, t).unwrap();
            let n = 100_000;
            let mean = (0..n).map(|_| sample_beta(post, &mut rng)).sum::<f64>() / n as f64;
            assert_abs_diff_eq!(mean, expected, epsilon = 0.01);
        }
    }

    #[test]
    fn beta_sampling_is_deterministic() {
        let post = BetaPosterior::from_counts(3, 9).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| sample_beta(post, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
    }

    #[test]
    fn probability_rejects_out_of_range() {
        assert!(Probability::new(-0.1).is_err());
        assert!(Probability::new(1.5).is_err());
        assert!(Probability::new(f64::NAN).is_err());
        assert_eq!(Probability::new(0.25).unwrap().get(), 0.25);
    }
}
