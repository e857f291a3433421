//! Log-normal inter-vehicle headway distances.
//!
//! Headways are front-bumper-to-front-bumper spacings in meters. Each lane
//! carries one distribution; the probability engine samples it both the
//! ordinary way and length-biased (the gap a stationary observer lands in).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Log-normal distribution of headway distances.
///
/// `mu` is the natural log of the median headway in meters; `sigma` is the
/// scale of the log. `sigma == 0` is the degenerate deterministic-headway
/// case and is permitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalHeadway {
    pub mu: f64,
    pub sigma: f64,
}

impl LogNormalHeadway {
    pub fn new(mu: f64, sigma: f64) -> Self {
        assert!(
            sigma >= 0.0 && sigma.is_finite() && mu.is_finite(),
            "invalid log-normal parameters mu={mu} sigma={sigma}"
        );
        Self { mu, sigma }
    }

    /// Median headway, exp(mu).
    pub fn median(&self) -> f64 {
        self.mu.exp()
    }

    /// Analytic mean, exp(mu + sigma^2 / 2).
    pub fn mean(&self) -> f64 {
        (self.mu + 0.5 * self.sigma * self.sigma).exp()
    }

    /// Draw one headway.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        (self.mu + self.sigma * z).exp()
    }

    /// Draw the spacing an outside observer lands in.
    ///
    /// Length-biasing (density proportional to h·f(h)) turns
    /// LogNormal(mu, sigma) into LogNormal(mu + sigma^2, sigma).
    pub fn sample_length_biased<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        (self.mu + self.sigma * self.sigma + self.sigma * z).exp()
    }
}

/// Maximum-likelihood fit on logs: `mu` is the mean of the log samples,
/// `sigma` the population (1/N) standard deviation of the log samples.
pub fn fit_lognormal(samples: &[f64]) -> Result<LogNormalHeadway> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: samples.len(),
        });
    }
    for &s in samples {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::NonPositiveSample(s));
        }
    }
    let n = samples.len() as f64;
    let mu = samples.iter().map(|s| s.ln()).sum::<f64>() / n;
    let var = samples
        .iter()
        .map(|s| {
            let e = s.ln() - mu;
            e * e
        })
        .sum::<f64>()
        / n;
    Ok(LogNormalHeadway::new(mu, var.sqrt()))
}

/// Draw `count` headways. Deterministic for a fixed seeded source.
pub fn sample_headways<R: Rng + ?Sized>(
    dist: &LogNormalHeadway,
    count: usize,
    rng: &mut R,
) -> Vec<f64> {
    assert!(count >= 1, "count must be at least 1");
    (0..count).map(|_| dist.sample(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fit_identical_samples_gives_zero_sigma() {
        let e2 = 2.0_f64.exp();
        let fitted = fit_lognormal(&[e2, e2, e2, e2]).unwrap();
        assert!((fitted.mu - 2.0).abs() < 1e-12);
        assert_eq!(fitted.sigma, 0.0);
    }

    #[test]
    fn fit_two_point_log_symmetric() {
        let fitted = fit_lognormal(&[1.0_f64.exp(), 3.0_f64.exp()]).unwrap();
        assert!((fitted.mu - 2.0).abs() < 1e-12);
        assert!((fitted.sigma - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(matches!(
            fit_lognormal(&[1.0]),
            Err(Error::InsufficientData { .. })
        ));
        assert!(matches!(
            fit_lognormal(&[1.0, -3.0]),
            Err(Error::NonPositiveSample(_))
        ));
        assert!(matches!(
            fit_lognormal(&[1.0, 0.0]),
            Err(Error::NonPositiveSample(_))
        ));
    }

    #[test]
    fn fit_recovers_parameters_from_large_sample() {
        let dist = LogNormalHeadway::new(3.0, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples = sample_headways(&dist, 100_000, &mut rng);
        let fitted = fit_lognormal(&samples).unwrap();
        assert!((fitted.mu - 3.0).abs() < 0.02, "mu = {}", fitted.mu);
        assert!((fitted.sigma - 0.5).abs() < 0.02, "sigma = {}", fitted.sigma);
    }

    #[test]
    fn degenerate_distribution_samples_constant() {
        let dist = LogNormalHeadway::new(2.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs = sample_headways(&dist, 3, &mut rng);
        for x in xs {
            assert_eq!(x, 2.0_f64.exp());
        }
    }

    #[test]
    fn sample_mean_matches_analytic_mean() {
        let dist = LogNormalHeadway::new(3.0, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let xs = sample_headways(&dist, 1_000_000, &mut rng);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let analytic = dist.mean();
        assert!(
            (mean - analytic).abs() / analytic < 0.01,
            "mean {mean} vs analytic {analytic}"
        );
    }

    #[test]
    fn same_seed_same_sequence() {
        let dist = LogNormalHeadway::new(3.0, 0.7);
        let a = sample_headways(&dist, 100, &mut ChaCha8Rng::seed_from_u64(5));
        let b = sample_headways(&dist, 100, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn mean_headway_examples() {
        assert!((LogNormalHeadway::new(2.0, 0.0).mean() - 2.0_f64.exp()).abs() < 1e-12);
        assert_eq!(LogNormalHeadway::new(0.0, 0.0).mean(), 1.0);
        assert!((LogNormalHeadway::new(3.0, 0.5).mean() - 3.125_f64.exp()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn samples_strictly_positive(mu in -2.0..4.0f64, sigma in 0.0..1.5f64, seed in 0u64..1000) {
            let dist = LogNormalHeadway::new(mu, sigma);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for x in sample_headways(&dist, 200, &mut rng) {
                prop_assert!(x > 0.0);
            }
        }

        #[test]
        fn mean_at_least_median(mu in -2.0..4.0f64, sigma in 0.0..1.5f64) {
            let dist = LogNormalHeadway::new(mu, sigma);
            prop_assert!(dist.mean() >= dist.median() - 1e-12);
            if sigma == 0.0 {
                prop_assert!((dist.mean() - dist.median()).abs() < 1e-12);
            } else {
                prop_assert!(dist.mean() > dist.median());
            }
        }

    }

    proptest! {
        // 100k draws per case; keep the case count small.
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn fit_roundtrip_moderate_sample(mu in 2.0..4.0f64, sigma in 0.05..1.5f64, seed in 0u64..50) {
            let dist = LogNormalHeadway::new(mu, sigma);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let samples = sample_headways(&dist, 100_000, &mut rng);
            let fitted = fit_lognormal(&samples).unwrap();
            prop_assert!((fitted.mu - mu).abs() < 0.02);
            prop_assert!((fitted.sigma - sigma).abs() < 0.02);
        }
    }
}
