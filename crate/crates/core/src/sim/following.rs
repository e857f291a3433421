//! Car-following law.
//!
//! An IDM-style time-continuous law parameterized from the calibrated
//! freeway behavior set: minimum gap and desired time headway map directly,
//! the comfortable and maximum decelerations bound the braking side, and the
//! acceleration cap is per vehicle class. The following-variation parameter
//! has no analogue in this law and is stored unused.

use serde::{Deserialize, Serialize};

/// Behavior parameters shared by every vehicle in a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CarFollowingParams {
    /// Minimum bumper-to-bumper gap at standstill (m).
    pub standstill_distance: f64,
    /// Desired time headway (s).
    pub headway_time: f64,
    /// Following variation (m); stored for completeness, not used by the law.
    pub following_variation: f64,
    /// Hard braking bound for the own vehicle (m/s^2, magnitude).
    pub max_decel_own: f64,
    /// Hard braking bound assumed for trailing vehicles (m/s^2, magnitude).
    pub max_decel_trailing: f64,
    /// Comfortable braking for the own vehicle (m/s^2, magnitude).
    pub accepted_decel_own: f64,
    /// Comfortable braking assumed for trailing vehicles (m/s^2, magnitude).
    pub accepted_decel_trailing: f64,
    /// Urgency relaxation floor for mandatory gap acceptance.
    pub safety_reduction_factor: f64,
    /// Cooperative braking bound (m/s^2, magnitude); cooperation is off.
    pub coop_braking_decel: f64,
    /// Acceleration cap for cars and smart cars (m/s^2).
    pub max_accel: f64,
    /// Acceleration cap for heavy goods vehicles (m/s^2).
    pub max_accel_hgv: f64,
}

impl Default for CarFollowingParams {
    fn default() -> Self {
        Self {
            standstill_distance: 1.5,
            headway_time: 0.9,
            following_variation: 4.0,
            max_decel_own: 4.0,
            max_decel_trailing: 3.0,
            accepted_decel_own: 1.0,
            accepted_decel_trailing: 0.5,
            safety_reduction_factor: 0.6,
            coop_braking_decel: 3.0,
            max_accel: 1.5,
            max_accel_hgv: 1.0,
        }
    }
}

/// The leader as the follower sees it: net bumper-to-bumper gap and speed.
#[derive(Debug, Clone, Copy)]
pub struct LeaderView {
    pub net_gap: f64,
    pub speed: f64,
}

/// IDM acceleration for one vehicle. Free-road relaxation toward the desired
/// speed; with a leader, the interaction term regulates toward the desired
/// gap `s0 + v·T` plus the dynamic closing-speed term. Output is bounded in
/// `[-max_decel_own, max_accel]`.
pub fn car_following_accel(
    speed: f64,
    desired_speed: f64,
    max_accel: f64,
    leader: Option<LeaderView>,
    p: &CarFollowingParams,
) -> f64 {
    let free_ratio = if desired_speed > 0.0 {
        (speed / desired_speed).powi(4)
    } else {
        1.0
    };
    let mut accel = max_accel * (1.0 - free_ratio);
    if let Some(leader) = leader {
        let s = leader.net_gap;
        if s <= 1e-9 {
            return -p.max_decel_own;
        }
        let closing = speed - leader.speed;
        let dynamic = speed * closing / (2.0 * (max_accel * p.accepted_decel_own).sqrt());
        let s_star = p.standstill_distance + (speed * p.headway_time + dynamic).max(0.0);
        accel = max_accel * (1.0 - free_ratio - (s_star / s).powi(2));
    }
    accel.clamp(-p.max_decel_own, max_accel)
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: CarFollowingParams = CarFollowingParams {
        standstill_distance: 1.5,
        headway_time: 0.9,
        following_variation: 4.0,
        max_decel_own: 4.0,
        max_decel_trailing: 3.0,
        accepted_decel_own: 1.0,
        accepted_decel_trailing: 0.5,
        safety_reduction_factor: 0.6,
        coop_braking_decel: 3.0,
        max_accel: 1.5,
        max_accel_hgv: 1.0,
    };

    #[test]
    fn equilibrium_at_desired_speed_without_leader() {
        let a = car_following_accel(33.0, 33.0, 1.5, None, &P);
        assert!(a.abs() < 1e-12);
    }

    #[test]
    fn standstill_equilibrium_at_minimum_gap() {
        let leader = LeaderView {
            net_gap: 1.5,
            speed: 0.0,
        };
        let a = car_following_accel(0.0, 33.0, 1.5, Some(leader), &P);
        assert!(a.abs() < 1e-12, "a = {a}");
    }

    #[test]
    fn accelerates_below_desired_speed() {
        let a = car_following_accel(20.0, 33.0, 1.5, None, &P);
        assert!(a > 0.0);
    }

    #[test]
    fn brakes_when_closing_fast() {
        let leader = LeaderView {
            net_gap: 30.0,
            speed: 0.0,
        };
        let a = car_following_accel(30.0, 33.0, 1.5, Some(leader), &P);
        assert_eq!(a, -4.0);
    }

    #[test]
    fn output_always_bounded() {
        for gap in [0.1, 1.0, 5.0, 50.0, 500.0] {
            for v in [0.0, 10.0, 25.0, 35.0] {
                for vl in [0.0, 10.0, 30.0] {
                    let a = car_following_accel(
                        v,
                        33.0,
                        1.5,
                        Some(LeaderView {
                            net_gap: gap,
                            speed: vl,
                        }),
                        &P,
                    );
                    assert!((-4.0..=1.5).contains(&a));
                }
            }
        }
    }

    #[test]
    fn approach_to_stopped_leader_never_collides() {
        // Ballistic integration at dt = 0.1 from 200 m behind a stopped
        // leader at full speed; the net gap must never go negative.
        let dt = 0.1;
        let mut pos = 0.0;
        let mut v: f64 = 30.0;
        let leader_rear = 200.0;
        let mut min_gap = f64::INFINITY;
        for _ in 0..2000 {
            let gap = leader_rear - pos;
            let a = car_following_accel(
                v,
                30.0,
                1.5,
                Some(LeaderView {
                    net_gap: gap,
                    speed: 0.0,
                }),
                &P,
            );
            v = (v + a * dt).clamp(0.0, 30.0);
            pos += v * dt;
            min_gap = min_gap.min(leader_rear - pos);
        }
        assert!(min_gap >= 0.0, "min gap {min_gap}");
        assert!(v < 0.01, "vehicle should have stopped, v = {v}");
    }
}
