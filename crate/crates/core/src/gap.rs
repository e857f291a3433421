//! Critical-gap models.
//!
//! Two gap notions live here: the model-side critical gap (linear in speed,
//! used by the probability engine and the simulator's lane-change logic) and
//! the lead/lag safety gaps with log-normal noise that gate execution of an
//! advised lane change.

use rand::Rng;
use rand_distr::StandardNormal;

/// Lead-gap coefficients, log scale.
const LEAD_CONST: f64 = 1.353;
const LEAD_POS_DV: f64 = -2.700;
const LEAD_NEG_DV: f64 = -0.231;
/// Standard deviation of the lead-gap noise term.
pub const LEAD_NOISE_SD: f64 = 1.112;

/// Lag-gap coefficients, log scale.
const LAG_CONST: f64 = 1.429;
const LAG_POS_DV: f64 = 0.471;
/// Standard deviation of the lag-gap noise term.
pub const LAG_NOISE_SD: f64 = 0.742;

/// Relative state of the adjacent-lane pair around the ego vehicle.
///
/// `lead_gap` is ego front bumper to the adjacent leader's rear bumper;
/// `lag_gap` is ego rear bumper to the adjacent follower's front bumper.
/// Negative values mean overlap and are never safe. An absent neighbor is
/// represented by an infinite gap (the check is vacuous on that side).
/// `dv_lead`/`dv_lag` are the neighbor speeds minus the ego speed.
#[derive(Debug, Clone, Copy)]
pub struct NeighborState {
    pub lead_gap: f64,
    pub lag_gap: f64,
    pub dv_lead: f64,
    pub dv_lag: f64,
}

impl NeighborState {
    /// Both sides empty.
    pub fn open_road() -> Self {
        Self {
            lead_gap: f64::INFINITY,
            lag_gap: f64::INFINITY,
            dv_lead: 0.0,
            dv_lag: 0.0,
        }
    }
}

/// Model-side critical gap: delta * v + s0.
pub fn gipps_critical_gap(v: f64, delta: f64, s0: f64) -> f64 {
    delta * v + s0
}

/// Critical gap to the adjacent-lane leader; `eps` is the noise term.
/// A faster leader (positive `dv_lead`) shrinks the required gap.
pub fn toledo_lead_critical_gap(dv_lead: f64, eps: f64) -> f64 {
    (LEAD_CONST + LEAD_POS_DV * dv_lead.max(0.0) + LEAD_NEG_DV * dv_lead.min(0.0) + eps).exp()
}

/// Critical gap to the adjacent-lane follower; `eps` is the noise term.
/// A faster follower (positive `dv_lag`) grows the required gap.
pub fn toledo_lag_critical_gap(dv_lag: f64, eps: f64) -> f64 {
    (LAG_CONST + LAG_POS_DV * dv_lag.max(0.0) + eps).exp()
}

/// Draw both noise terms and check the lead and lag gaps against their
/// critical values. Noise is redrawn on every call; callers own the source.
pub fn is_safe_lane_change<R: Rng + ?Sized>(neighbors: &NeighborState, rng: &mut R) -> bool {
    let z_lead: f64 = rng.sample(StandardNormal);
    let z_lag: f64 = rng.sample(StandardNormal);
    let lead_cr = toledo_lead_critical_gap(neighbors.dv_lead, LEAD_NOISE_SD * z_lead);
    let lag_cr = toledo_lag_critical_gap(neighbors.dv_lag, LAG_NOISE_SD * z_lag);
    neighbors.lead_gap >= lead_cr && neighbors.lag_gap >= lag_cr
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn gipps_examples() {
        assert_eq!(gipps_critical_gap(25.0, 1.6, 1.0), 41.0);
        assert_eq!(gipps_critical_gap(0.0, 1.6, 1.0), 1.0);
        assert_eq!(gipps_critical_gap(30.0, 1.6, 1.0), 49.0);
    }

    #[test]
    fn lead_gap_examples() {
        assert!((toledo_lead_critical_gap(0.0, 0.0) - 1.353_f64.exp()).abs() < 1e-12);
        assert!((toledo_lead_critical_gap(1.0, 0.0) - (1.353_f64 - 2.700).exp()).abs() < 1e-12);
        assert!((toledo_lead_critical_gap(-1.0, 0.0) - (1.353_f64 + 0.231).exp()).abs() < 1e-12);
    }

    #[test]
    fn lag_gap_examples() {
        assert!((toledo_lag_critical_gap(0.0, 0.0) - 1.429_f64.exp()).abs() < 1e-12);
        assert!((toledo_lag_critical_gap(-2.0, 0.0) - 1.429_f64.exp()).abs() < 1e-12);
        assert!((toledo_lag_critical_gap(2.0, 0.0) - (1.429_f64 + 0.942).exp()).abs() < 1e-12);
    }

    #[test]
    fn critical_gaps_strictly_positive() {
        for dv in [-50.0, -3.0, 0.0, 3.0, 50.0] {
            for eps in [-5.0, 0.0, 5.0] {
                assert!(toledo_lead_critical_gap(dv, eps) > 0.0);
                assert!(toledo_lag_critical_gap(dv, eps) > 0.0);
            }
        }
    }

    #[test]
    fn critical_gap_monotonicity() {
        let mut prev = f64::INFINITY;
        for dv in [-4.0, -2.0, 0.0, 2.0, 4.0] {
            let g = toledo_lead_critical_gap(dv, 0.0);
            assert!(g <= prev + 1e-12, "lead gap must not grow with dv_lead");
            prev = g;
        }
        let mut prev = 0.0;
        for dv in [-4.0, -2.0, 0.0, 2.0, 4.0] {
            let g = toledo_lag_critical_gap(dv, 0.0);
            assert!(g >= prev - 1e-12, "lag gap must not shrink with dv_lag");
            prev = g;
        }
    }

    #[test]
    fn huge_gaps_always_safe() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = NeighborState {
            lead_gap: 1000.0,
            lag_gap: 1000.0,
            dv_lead: -3.0,
            dv_lag: 3.0,
        };
        for _ in 0..1000 {
            assert!(is_safe_lane_change(&n, &mut rng));
        }
    }

    #[test]
    fn overlap_never_safe() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = NeighborState {
            lead_gap: -0.5,
            lag_gap: 1000.0,
            dv_lead: 0.0,
            dv_lag: 0.0,
        };
        for _ in 0..1000 {
            assert!(!is_safe_lane_change(&n, &mut rng));
        }
    }

    #[test]
    fn open_road_is_safe() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(is_safe_lane_change(&NeighborState::open_road(), &mut rng));
    }

    #[test]
    fn acceptance_frequency_matches_closed_form() {
        // With both gaps at 6 m and zero relative speeds, acceptance happens
        // iff exp(const + eps) <= 6 on each side independently, which gives
        // the product of two normal tail probabilities.
        let gap = 6.0_f64;
        let normal = Normal::new(0.0, 1.0).unwrap();
        let p_lead = normal.cdf((gap.ln() - 1.353) / LEAD_NOISE_SD);
        let p_lag = normal.cdf((gap.ln() - 1.429) / LAG_NOISE_SD);
        let expected = p_lead * p_lag;

        let n = NeighborState {
            lead_gap: gap,
            lag_gap: gap,
            dv_lead: 0.0,
            dv_lag: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws = 100_000;
        let accepted = (0..draws)
            .filter(|_| is_safe_lane_change(&n, &mut rng))
            .count();
        let freq = accepted as f64 / draws as f64;
        assert!(
            (freq - expected).abs() < 0.01,
            "freq {freq} vs closed form {expected}"
        );
    }

    #[test]
    fn zero_noise_decision_deterministic_and_monotone() {
        // Fixing eps at 0 the decision reduces to two threshold tests.
        let lead_cr = toledo_lead_critical_gap(0.0, 0.0);
        let lag_cr = toledo_lag_critical_gap(0.0, 0.0);
        assert!(6.0 >= lead_cr && 6.0 >= lag_cr);
        assert!(1.0 < lead_cr && 1.0 < lag_cr);
    }
}
