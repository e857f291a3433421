//! Reach-probability engine.
//!
//! Estimates P(S): the probability that a vehicle traveling at `v1` reaches a
//! goal position `d` meters ahead on a lane `n − 1` changes over. The single
//! lane-change case is estimated by Monte Carlo over a normalized problem and
//! cached in a lookup table ([`BaseCaseTable`]); more changes compose the
//! base case recursively by total probability ([`reach_probability`]).
//!
//! Two independent routes exist on purpose: the table + quadrature path
//! ([`BaseCaseTable::lookup`], [`reach_probability`]) and the direct
//! event-model simulation ([`simulate_base_case`], [`chained_monte_carlo`]).
//! The second is the oracle the first is checked against.

mod base_case;
mod recursion;
mod table;

pub use base_case::{chained_monte_carlo, simulate_base_case};
pub use recursion::{
    clamp_adjacent_speed, reach_probability, reach_probability_with_nodes,
    DEFAULT_QUADRATURE_NODES, MIN_QUADRATURE_NODES,
};
pub use table::{BaseCaseTable, IsotonicReport, TableGrids, TABLE_FORMAT_VERSION};

use serde::{Deserialize, Serialize};

use crate::headway::LogNormalHeadway;

/// Per-lane traffic state consumed by the probability model.
///
/// `v` is the average lane speed (m/s), `g` the critical gap (m) a driver
/// needs in this lane, `t` the duration (s) of a lane change into it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneParams {
    pub v: f64,
    pub headway: LogNormalHeadway,
    pub g: f64,
    pub t: f64,
}

impl LaneParams {
    pub fn new(v: f64, headway: LogNormalHeadway, g: f64, t: f64) -> Self {
        assert!(v > 0.0, "lane speed must be positive");
        assert!(g > 0.0, "critical gap must be positive");
        assert!(t > 0.0, "lane change duration must be positive");
        Self { v, headway, g, t }
    }
}

/// A reach-probability query: goal `d` meters ahead, ego speed `v1`, and one
/// [`LaneParams`] entry per lane change required (lanes 2..n left to right).
#[derive(Debug, Clone, PartialEq)]
pub struct GoalQuery {
    pub d: f64,
    pub v1: f64,
    pub lanes: Vec<LaneParams>,
}

impl GoalQuery {
    pub fn new(d: f64, v1: f64, lanes: Vec<LaneParams>) -> Self {
        assert!(d >= 0.0, "distance must be non-negative");
        assert!(v1 > 0.0, "ego speed must be positive");
        assert!(!lanes.is_empty(), "at least one lane change required");
        Self { d, v1, lanes }
    }
}

/// Standard normal CDF.
pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Probability that the length-biased straddling gap clears `g`: the chance
/// the ego finds its adjacent gap acceptable the moment it looks.
pub(crate) fn straddling_gap_clearance(headway: &LogNormalHeadway, g: f64) -> f64 {
    if headway.sigma == 0.0 {
        if headway.median() >= g {
            1.0
        } else {
            0.0
        }
    } else {
        normal_cdf((headway.mu + headway.sigma * headway.sigma - g.ln()) / headway.sigma)
    }
}
