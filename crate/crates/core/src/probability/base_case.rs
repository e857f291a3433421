//! Monte Carlo event model for a single lane change.
//!
//! Everything happens in the ego frame. The adjacent-lane stream is a
//! stationary renewal process of front-bumper positions with i.i.d.
//! log-normal spacings that drifts past the ego at `Δv = lane.v − v1`. The
//! ego starts inside a straddling gap drawn length-biased (a stationary
//! observer lands in a spacing with probability proportional to its length)
//! and placed uniformly within it. Time advances on a fixed `dt` grid; a gap
//! is accepted at the first grid time where the straddling spacing is at
//! least `g` and the ego is strictly inside the pair. The trial succeeds iff
//! the acceptance time plus the change duration fits within `d / v1`.
//!
//! Between stream crossings the straddling spacing is constant, so instead
//! of literally stepping `dt` the walk jumps from crossing to crossing and
//! evaluates the earliest grid time inside each window — same decisions,
//! fewer operations. The stream is extended lazily, which covers the
//! required `|Δv|·d/v1 + 10·mean` extension without drawing unused spacings.

use rand::Rng;
use rand_distr::Open01;

use super::{GoalQuery, LaneParams};

/// Step-size rule: fine enough to resolve the fastest gap transit.
fn step_seconds(lane: &LaneParams, drift: f64) -> f64 {
    (0.05 * lane.headway.mean() / drift.abs().max(0.1)).min(0.1)
}

/// One trial of the event model. Returns the completion time of the lane
/// change (acceptance time + `lane.t`) if the trial succeeds within
/// `horizon` seconds, `None` otherwise.
fn sample_change_completion<R: Rng + ?Sized>(
    lane: &LaneParams,
    ego_speed: f64,
    horizon: f64,
    rng: &mut R,
) -> Option<f64> {
    let deadline = horizon - lane.t;
    if deadline < 0.0 {
        return None;
    }
    let drift = lane.v - ego_speed;

    let h_star = lane.headway.sample_length_biased(rng);
    if drift == 0.0 {
        // Frozen gap pattern: the straddling gap never changes.
        return (h_star >= lane.g).then_some(lane.t);
    }

    let speed = drift.abs();
    // Work in drift distance s = |Δv|·t; windows between stream crossings
    // carry a constant straddling gap.
    let ds = step_seconds(lane, drift) * speed;
    let s_deadline = deadline * speed;

    let u: f64 = rng.sample(Open01);
    let mut win_start = 0.0;
    let mut win_end = u * h_star;
    let mut gap = h_star;
    let mut first = true;
    loop {
        if win_start > s_deadline {
            return None;
        }
        if gap >= lane.g {
            // Earliest grid time inside the window. Grid points on the
            // window boundary put the ego exactly on a front bumper and do
            // not count; s = 0 is a valid first step.
            let s_acc = if first {
                Some(0.0)
            } else {
                let s = ((win_start / ds).floor() + 1.0) * ds;
                (s < win_end).then_some(s)
            };
            if let Some(s) = s_acc {
                return (s <= s_deadline).then_some(s / speed + lane.t);
            }
        }
        win_start = win_end;
        gap = lane.headway.sample(rng);
        win_end += gap;
        first = false;
    }
}

/// Fraction of `trials` in which a single lane change into `lane` completes
/// within `d` meters at ego speed `v1`. Deterministic per seeded source.
pub fn simulate_base_case<R: Rng + ?Sized>(
    d: f64,
    v1: f64,
    lane: &LaneParams,
    trials: u64,
    rng: &mut R,
) -> f64 {
    assert!(trials >= 1, "need at least one trial");
    assert!(v1 > 0.0, "ego speed must be positive");
    if d <= 0.0 {
        return 0.0;
    }
    let horizon = d / v1;
    let mut successes = 0u64;
    for _ in 0..trials {
        if sample_change_completion(lane, v1, horizon, rng).is_some() {
            successes += 1;
        }
    }
    successes as f64 / trials as f64
}

/// Direct Monte Carlo estimate of a multi-lane query: each trial chains the
/// single-change event model stage by stage, spending the distance each
/// completed change consumed and adopting the new lane's speed.
///
/// This is the brute-force route the table + quadrature path is checked
/// against; it shares the event model but none of the lookup machinery.
pub fn chained_monte_carlo<R: Rng + ?Sized>(query: &GoalQuery, trials: u64, rng: &mut R) -> f64 {
    assert!(trials >= 1, "need at least one trial");
    if query.d <= 0.0 {
        return 0.0;
    }
    let mut successes = 0u64;
    'trial: for _ in 0..trials {
        let mut used = 0.0;
        let mut speed = query.v1;
        for lane in &query.lanes {
            let horizon = (query.d - used) / speed;
            match sample_change_completion(lane, speed, horizon, rng) {
                Some(completion) => {
                    used += speed * completion;
                    speed = lane.v;
                }
                None => continue 'trial,
            }
        }
        successes += 1;
    }
    successes as f64 / trials as f64
}
