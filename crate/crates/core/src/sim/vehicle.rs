use serde::{Deserialize, Serialize};

/// Vehicle classes. Smart cars are ordinary cars whose exit lane changes are
/// driven by the advisor; heavy goods vehicles are longer and slower.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleClass {
    Car,
    SmartCar,
    Hgv,
}

impl VehicleClass {
    pub fn label(&self) -> &'static str {
        match self {
            VehicleClass::Car => "car",
            VehicleClass::SmartCar => "smart_car",
            VehicleClass::Hgv => "hgv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Mainline,
    OffRamp,
}

impl Route {
    pub fn label(&self) -> &'static str {
        match self {
            Route::Mainline => "mainline",
            Route::OffRamp => "off_ramp",
        }
    }
}

/// Why a lane change was made.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneChangeCause {
    Advised,
    Mandatory,
    Discretionary,
}

impl LaneChangeCause {
    pub fn label(&self) -> &'static str {
        match self {
            LaneChangeCause::Advised => "advised",
            LaneChangeCause::Mandatory => "mandatory",
            LaneChangeCause::Discretionary => "discretionary",
        }
    }
}

/// Lane-change state machine. `Advised` latches until one rightward change
/// completes; `Executing` spans the fixed change duration during which the
/// vehicle occupies both lanes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LcState {
    None,
    Advised { target_lane: u8 },
    Executing {
        elapsed: f64,
        from_lane: u8,
        target_lane: u8,
        cause: LaneChangeCause,
    },
}

#[derive(Debug, Clone)]
pub struct Vehicle {
    pub id: u64,
    pub class: VehicleClass,
    /// 1 = leftmost mainline lane; `lane_count + 1` is the deceleration/ramp
    /// lane. During a change this stays the source lane until completion.
    pub lane: u8,
    /// Front bumper, meters from segment start. Non-decreasing.
    pub position: f64,
    pub speed: f64,
    pub desired_speed: f64,
    pub length: f64,
    pub max_accel: f64,
    pub route: Route,
    pub lc_state: LcState,
    pub entry_time: f64,
    /// Cooldown bookkeeping for discretionary changes.
    pub last_change_time: f64,
    /// Set when the vehicle stops at the deceleration-lane end waiting for a
    /// gap; cleared when it gets one.
    pub dwell_since: Option<f64>,
    /// Crossing time of the travel-time measurement point, once passed.
    pub measured_exit_time: Option<f64>,
    pub retired: bool,
}

impl Vehicle {
    /// Rear bumper position.
    pub fn rear(&self) -> f64 {
        self.position - self.length
    }

    /// Lane currently being changed into, if any.
    pub fn executing_target(&self) -> Option<u8> {
        match self.lc_state {
            LcState::Executing { target_lane, .. } => Some(target_lane),
            _ => None,
        }
    }

    /// Whether the vehicle occupies `lane` for car-following purposes.
    /// A vehicle mid-change occupies both its source and target lanes.
    pub fn occupies(&self, lane: u8) -> bool {
        self.lane == lane || self.executing_target() == Some(lane)
    }

    pub fn is_executing(&self) -> bool {
        matches!(self.lc_state, LcState::Executing { .. })
    }
}
