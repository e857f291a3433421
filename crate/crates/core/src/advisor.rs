//! Advance warning logic.
//!
//! Every evaluation period the advisor computes, per exiting smart car, the
//! probability of entering the deceleration lane before it ends. The first
//! time that probability dips strictly below the threshold `p_l` it emits a
//! lane-change advisory toward the immediate right lane. The advisory
//! latches until one rightward change completes; execution is gated on the
//! lead/lag safety check and retried every step while it fails.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gap::{gipps_critical_gap, is_safe_lane_change, NeighborState};
use crate::probability::{
    clamp_adjacent_speed, reach_probability, BaseCaseTable, GoalQuery, LaneParams,
};
use crate::sim::detector::SegmentParamsTable;
use crate::sim::layout::RoadLayout;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdvisoryConfig {
    /// Probability threshold; an advisory fires when the reach probability
    /// drops strictly below it.
    pub p_l: f64,
    /// Critical-gap speed coefficient (s).
    pub delta: f64,
    /// Critical-gap standstill term (m).
    pub s0: f64,
    /// Lane change duration (s).
    pub t_lc: f64,
    /// Adjacent-speed window (m/s) for the clamp rule.
    pub v_l: f64,
    /// Seconds between probability evaluations per vehicle.
    pub reevaluation_period: f64,
}

impl Default for AdvisoryConfig {
    fn default() -> Self {
        Self {
            p_l: 0.9,
            delta: 1.6,
            s0: 1.0,
            t_lc: 3.0,
            v_l: 4.0,
            reevaluation_period: 1.0,
        }
    }
}

impl AdvisoryConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.p_l > 0.0 && self.p_l < 1.0) {
            return Err(crate::Error::Config(format!(
                "p_l must be in (0, 1), got {}",
                self.p_l
            )));
        }
        for (name, v) in [
            ("delta", self.delta),
            ("s0", self.s0),
            ("t_lc", self.t_lc),
            ("v_l", self.v_l),
            ("reevaluation_period", self.reevaluation_period),
        ] {
            if !(v > 0.0) {
                return Err(crate::Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// An emitted lane-change instruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Advisory {
    pub vehicle_id: u64,
    pub time: f64,
    pub probability_at_trigger: f64,
    pub target_lane: u8,
}

/// Reach probability for a vehicle at `position` traveling at `speed` in
/// `lane`, using the segment parameters of its current position.
///
/// The goal is the end of the deceleration lane; the query covers every lane
/// strictly to the right up to the rightmost mainline lane. Critical gaps
/// come from the measured lane speeds; the speeds entering the query are
/// clamped pairwise so near-equal adjacent speeds do not collapse the swept
/// distance. Callers must not ask about vehicles already in the rightmost
/// mainline lane (zero changes needed; treat the probability as 1).
pub fn evaluate(
    position: f64,
    speed: f64,
    lane: u8,
    params: &SegmentParamsTable,
    layout: &RoadLayout,
    config: &AdvisoryConfig,
    table: &BaseCaseTable,
) -> f64 {
    debug_assert!(lane < layout.rightmost_mainline());
    let d = layout.decel_lane_end() - position;
    if d <= 0.0 {
        return 0.0;
    }
    // A stalled vehicle has an effectively unlimited time budget; floor the
    // speed rather than divide by zero.
    let v1 = speed.max(0.1);
    let station = layout.station_for(position);
    let mut lanes = Vec::with_capacity((layout.rightmost_mainline() - lane) as usize);
    let mut v_prev = v1;
    for target in (lane + 1)..=layout.rightmost_mainline() {
        let estimate = params.lane_estimate(station, target);
        let g = gipps_critical_gap(estimate.v, config.delta, config.s0);
        let v_clamped = clamp_adjacent_speed(v_prev, estimate.v, config.v_l);
        lanes.push(LaneParams {
            v: v_clamped,
            headway: estimate.headway,
            g,
            t: config.t_lc,
        });
        v_prev = v_clamped;
    }
    reach_probability(&GoalQuery { d, v1, lanes }, table)
}

/// Threshold test: advisories fire on "dipped below", strictly.
pub fn should_advise(probability: f64, config: &AdvisoryConfig) -> bool {
    probability < config.p_l
}

/// Safety-gated execution: draw the lead/lag noise and check both gaps.
/// `true` means the change may start now; `false` means defer and retry.
pub fn execute_if_safe<R: Rng + ?Sized>(neighbors: &NeighborState, rng: &mut R) -> bool {
    is_safe_lane_change(neighbors, rng)
}

/// First time a recorded probability trace dips strictly below `threshold`.
/// Samples must be in time order.
pub fn trigger_time(trace: &[(f64, f64)], threshold: f64) -> Option<f64> {
    trace
        .iter()
        .find(|(_, p)| *p < threshold)
        .map(|(t, _)| *t)
}
