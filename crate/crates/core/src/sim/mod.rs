//! Deterministic time-stepped simulation of a multi-lane highway strip with
//! an off-ramp.
//!
//! Each step runs a fixed phase order: (1) advisor decisions for smart cars,
//! (2) mandatory lane-change logic for exiting vehicles, (3) discretionary
//! lane changes, (4) lane-change execution progress, (5) car-following
//! accelerations, (6) kinematic update, (7) arrivals, (8) detector and exit
//! recording. A single run is strictly sequential and bit-reproducible per
//! (config, seed); concurrency lives across runs.

pub mod detector;
pub mod following;
pub mod layout;
pub mod vehicle;

use std::collections::VecDeque;
use std::sync::Arc;

use rand::distributions::Open01;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::advisor::{self, AdvisoryConfig};
use crate::error::{Error, Result};
use crate::events::{AdvisoryEvent, LaneChangeEvent, RetiredRecord, TraceSample};
use crate::gap::{gipps_critical_gap, is_safe_lane_change, NeighborState};
use crate::headway::LogNormalHeadway;
use crate::probability::BaseCaseTable;
use detector::{
    DetectorRecord, EstimateSource, LaneEstimate, RollingEstimator, SegmentParamsTable,
};
use following::{car_following_accel, CarFollowingParams, LeaderView};
use layout::RoadLayout;
use vehicle::{LaneChangeCause, LcState, Route, Vehicle, VehicleClass};

/// Everything a single run needs besides the advisor wiring and the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub layout: RoadLayout,
    /// Step length (s); the collision-safety reasoning assumes <= 0.1.
    pub dt: f64,
    pub horizon: f64,
    pub flow_veh_hr: f64,
    pub hgv_fraction: f64,
    pub smart_fraction: f64,
    pub car_following: CarFollowingParams,
    /// Desired-speed band for cars and smart cars (m/s).
    pub car_speed_range: (f64, f64),
    /// Desired-speed band for heavy goods vehicles (m/s).
    pub hgv_speed_range: (f64, f64),
    pub car_length: f64,
    pub hgv_length: f64,
    /// How far upstream of the deceleration lane exiting vehicles start
    /// seeking rightward gaps.
    pub lane_change_distance: f64,
    /// Fixed lane-change duration (s).
    pub lane_change_duration: f64,
    /// Critical-gap coefficients for model-side gap acceptance.
    pub gipps_delta: f64,
    pub gipps_s0: f64,
    /// Discretionary changes need at least this sustainable-speed gain (m/s).
    pub discretionary_gain: f64,
    /// Seconds between lane changes of one vehicle (discretionary rule).
    pub discretionary_cooldown: f64,
    /// Seconds a blocked exiting vehicle may wait at the deceleration-lane
    /// end before it is retired as a missed exit.
    pub dwell_limit: f64,
    /// Fallback lane parameters when no estimate is available.
    pub default_lane_speed: f64,
    pub default_headway_mu: f64,
    pub default_headway_sigma: f64,
    /// Online estimator window and refresh period (s).
    pub estimator_window: f64,
    pub estimator_refresh: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            layout: RoadLayout::default(),
            dt: 0.1,
            horizon: 3600.0,
            flow_veh_hr: 6400.0,
            hgv_fraction: 0.02,
            smart_fraction: 0.02,
            car_following: CarFollowingParams::default(),
            car_speed_range: (112.0 / 3.6, 128.0 / 3.6),
            hgv_speed_range: (95.0 / 3.6, 105.0 / 3.6),
            car_length: 4.5,
            hgv_length: 12.0,
            lane_change_distance: 1600.0,
            lane_change_duration: 3.0,
            gipps_delta: 1.6,
            gipps_s0: 1.0,
            discretionary_gain: 2.0,
            discretionary_cooldown: 10.0,
            dwell_limit: 60.0,
            default_lane_speed: 30.0,
            default_headway_mu: 45.0_f64.ln(),
            default_headway_sigma: 0.5,
            estimator_window: 300.0,
            estimator_refresh: 60.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return Err(Error::Config(format!("dt must be in (0, 0.1], got {}", self.dt)));
        }
        if !(self.horizon > 0.0) || !(self.flow_veh_hr >= 0.0) {
            return Err(Error::Config("horizon must be positive, flow non-negative".into()));
        }
        let share = self.hgv_fraction + self.smart_fraction;
        if !(0.0..=1.0).contains(&self.hgv_fraction)
            || !(0.0..=1.0).contains(&self.smart_fraction)
            || share > 1.0
        {
            return Err(Error::Config(format!(
                "class fractions must sum to at most 1, got hgv {} + smart {}",
                self.hgv_fraction, self.smart_fraction
            )));
        }
        if !(self.lane_change_duration > 0.0) {
            return Err(Error::Config("lane change duration must be positive".into()));
        }
        Ok(())
    }

    pub fn default_lane_estimate(&self) -> LaneEstimate {
        LaneEstimate {
            v: self.default_lane_speed,
            headway: LogNormalHeadway::new(self.default_headway_mu, self.default_headway_sigma),
            source: EstimateSource::Default,
        }
    }
}

/// Where the advisor's per-segment lane parameters come from.
pub enum ParamsMode {
    /// Parameters estimated from a previous baseline run and frozen.
    Offline(Arc<SegmentParamsTable>),
    /// Rolling estimation from this run's own detector records.
    Online,
}

/// Advisor wiring for an advised run.
pub struct AdvisorSetup {
    pub config: AdvisoryConfig,
    pub table: Arc<BaseCaseTable>,
    pub params: ParamsMode,
}

enum ParamsRuntime {
    Offline(Arc<SegmentParamsTable>),
    Online(RollingEstimator),
}

struct AdvisorRuntime {
    config: AdvisoryConfig,
    table: Arc<BaseCaseTable>,
    params: ParamsRuntime,
    period_steps: u64,
}

/// Everything a finished run reports.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub seed: u64,
    pub retired: Vec<RetiredRecord>,
    pub detectors: Vec<DetectorRecord>,
    pub lane_changes: Vec<LaneChangeEvent>,
    pub advisories: Vec<AdvisoryEvent>,
    pub traces: Vec<TraceSample>,
    pub spawned: u64,
    pub retired_mainline: u64,
    pub retired_offramp: u64,
    pub missed_exits: u64,
    pub on_road_at_end: u64,
    pub queued_at_end: u64,
    pub queue_peak: usize,
    pub estimator_fallbacks: u64,
    /// Every smart car that entered the road, for event filtering.
    pub smart_ids: Vec<u64>,
}

#[derive(Debug, Clone, Copy)]
struct PendingVehicle {
    class: VehicleClass,
    desired_speed: f64,
    length: f64,
    max_accel: f64,
    route: Route,
}

/// Per-lane occupancy, each list sorted by position descending (ties by id).
/// A vehicle mid-change appears in both its source and target lanes.
struct LaneIndex {
    lanes: Vec<Vec<usize>>,
}

impl LaneIndex {
    fn build(vehicles: &[Vehicle], lane_total: u8) -> Self {
        let mut lanes = vec![Vec::new(); lane_total as usize];
        for (i, v) in vehicles.iter().enumerate() {
            if v.retired {
                continue;
            }
            lanes[(v.lane - 1) as usize].push(i);
            if let Some(target) = v.executing_target() {
                lanes[(target - 1) as usize].push(i);
            }
        }
        for list in &mut lanes {
            list.sort_by(|&a, &b| {
                vehicles[b]
                    .position
                    .total_cmp(&vehicles[a].position)
                    .then(vehicles[a].id.cmp(&vehicles[b].id))
            });
        }
        Self { lanes }
    }

    fn list(&self, lane: u8) -> &[usize] {
        &self.lanes[(lane - 1) as usize]
    }

    fn insert(&mut self, vehicles: &[Vehicle], lane: u8, idx: usize) {
        let list = &mut self.lanes[(lane - 1) as usize];
        let pos = vehicles[idx].position;
        let id = vehicles[idx].id;
        let at = list.partition_point(|&j| {
            vehicles[j].position > pos || (vehicles[j].position == pos && vehicles[j].id < id)
        });
        list.insert(at, idx);
    }

    fn remove(&mut self, lane: u8, idx: usize) {
        let list = &mut self.lanes[(lane - 1) as usize];
        if let Some(p) = list.iter().position(|&j| j == idx) {
            list.remove(p);
        }
    }

    /// Nearest vehicles strictly ahead of / behind `position` in `lane`,
    /// excluding `self_id`. Equal positions break ties by id, matching the
    /// sort order.
    fn neighbors(
        &self,
        vehicles: &[Vehicle],
        lane: u8,
        position: f64,
        self_id: u64,
    ) -> (Option<usize>, Option<usize>) {
        let list = self.list(lane);
        let split = list.partition_point(|&j| {
            vehicles[j].position > position
                || (vehicles[j].position == position && vehicles[j].id < self_id)
        });
        let leader = split
            .checked_sub(1)
            .map(|k| list[k])
            .filter(|&j| vehicles[j].id != self_id);
        let follower = list[split..]
            .iter()
            .copied()
            .find(|&j| vehicles[j].id != self_id);
        (leader, follower)
    }

    /// Rearmost occupant of `lane` (lowest position), if any.
    fn rearmost(&self, lane: u8) -> Option<usize> {
        self.list(lane).last().copied()
    }
}

pub struct Simulation {
    cfg: SimConfig,
    advisor: Option<AdvisorRuntime>,
    seed: u64,
    rng: ChaCha8Rng,
    time: f64,
    step_index: u64,
    vehicles: Vec<Vehicle>,
    index: LaneIndex,
    prev_positions: Vec<f64>,
    queue: VecDeque<PendingVehicle>,
    next_id: u64,
    retired: Vec<RetiredRecord>,
    detectors: Vec<DetectorRecord>,
    lane_changes: Vec<LaneChangeEvent>,
    advisories: Vec<AdvisoryEvent>,
    traces: Vec<TraceSample>,
    spawned: u64,
    retired_mainline: u64,
    retired_offramp: u64,
    retired_missed: u64,
    queue_peak: usize,
    smart_ids: Vec<u64>,
}

impl Simulation {
    pub fn new(cfg: SimConfig, advisor: Option<AdvisorSetup>, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let advisor = match advisor {
            None => None,
            Some(setup) => {
                setup.config.validate()?;
                let period_steps =
                    (setup.config.reevaluation_period / cfg.dt).round().max(1.0) as u64;
                let params = match setup.params {
                    ParamsMode::Offline(table) => ParamsRuntime::Offline(table),
                    ParamsMode::Online => ParamsRuntime::Online(RollingEstimator::new(
                        &cfg.layout,
                        cfg.estimator_window,
                        cfg.estimator_refresh,
                        cfg.default_lane_estimate(),
                    )),
                };
                Some(AdvisorRuntime {
                    config: setup.config,
                    table: setup.table,
                    params,
                    period_steps,
                })
            }
        };
        let lane_total = cfg.layout.ramp_lane();
        Ok(Self {
            cfg,
            advisor,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            time: 0.0,
            step_index: 0,
            vehicles: Vec::new(),
            index: LaneIndex {
                lanes: vec![Vec::new(); lane_total as usize],
            },
            prev_positions: Vec::new(),
            queue: VecDeque::new(),
            next_id: 1,
            retired: Vec::new(),
            detectors: Vec::new(),
            lane_changes: Vec::new(),
            advisories: Vec::new(),
            traces: Vec::new(),
            spawned: 0,
            retired_mainline: 0,
            retired_offramp: 0,
            retired_missed: 0,
            queue_peak: 0,
            smart_ids: Vec::new(),
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    /// Run to the configured horizon and emit the run log.
    pub fn run(mut self) -> Result<RunOutput> {
        let steps = (self.cfg.horizon / self.cfg.dt).round() as u64;
        for _ in 0..steps {
            self.step()?;
        }
        Ok(RunOutput {
            seed: self.seed,
            on_road_at_end: self.vehicles.len() as u64,
            queued_at_end: self.queue.len() as u64,
            retired: self.retired,
            detectors: self.detectors,
            lane_changes: self.lane_changes,
            advisories: self.advisories,
            traces: self.traces,
            spawned: self.spawned,
            retired_mainline: self.retired_mainline,
            retired_offramp: self.retired_offramp,
            missed_exits: self.retired_missed,
            queue_peak: self.queue_peak,
            smart_ids: self.smart_ids,
            estimator_fallbacks: match &self.advisor {
                Some(AdvisorRuntime {
                    params: ParamsRuntime::Online(est),
                    ..
                }) => est.fallback_count,
                _ => 0,
            },
        })
    }

    /// One step in the normative phase order.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.cfg.dt;
        self.index = LaneIndex::build(&self.vehicles, self.cfg.layout.ramp_lane());
        self.phase_advisor();
        self.phase_mandatory();
        self.phase_discretionary();
        self.phase_execution(dt);
        let accels = self.phase_accelerations();
        self.phase_kinematics(&accels, dt)?;
        self.phase_arrivals(dt);
        self.phase_recording(dt)?;
        self.time += dt;
        self.step_index += 1;
        if self.vehicles.iter().any(|v| v.retired) {
            self.vehicles.retain(|v| !v.retired);
        }
        Ok(())
    }

    // ---- phase 1: advisor ------------------------------------------------

    fn phase_advisor(&mut self) {
        let Some(advisor) = &mut self.advisor else {
            return;
        };
        if let ParamsRuntime::Online(est) = &mut advisor.params {
            est.maybe_refresh(self.time, &self.detectors, &self.cfg.layout);
        }
        let due = self.step_index % advisor.period_steps == 0;
        let rightmost = self.cfg.layout.rightmost_mainline();

        for idx in 0..self.vehicles.len() {
            let v = &self.vehicles[idx];
            if v.retired
                || v.class != VehicleClass::SmartCar
                || v.route != Route::OffRamp
                || v.lane >= rightmost
                || v.is_executing()
            {
                continue;
            }
            if due && !matches!(v.lc_state, LcState::Advised { .. }) {
                let advisor = self.advisor.as_ref().unwrap();
                let params = match &advisor.params {
                    ParamsRuntime::Offline(t) => t.as_ref(),
                    ParamsRuntime::Online(est) => est.table(),
                };
                let p = advisor::evaluate(
                    v.position,
                    v.speed,
                    v.lane,
                    params,
                    &self.cfg.layout,
                    &advisor.config,
                    &advisor.table,
                );
                let (id, time, position, lane) = (v.id, self.time, v.position, v.lane);
                self.traces.push(TraceSample {
                    vehicle_id: id,
                    time,
                    probability: p,
                });
                if advisor::should_advise(p, &advisor.config) {
                    let p_l = advisor.config.p_l;
                    self.vehicles[idx].lc_state = LcState::Advised {
                        target_lane: lane + 1,
                    };
                    self.advisories.push(AdvisoryEvent {
                        vehicle_id: id,
                        time,
                        position,
                        lane,
                        probability: p,
                        p_l,
                    });
                }
            }
            // Advised vehicles retry the safety-gated execution every step.
            if let LcState::Advised { target_lane } = self.vehicles[idx].lc_state {
                if self.physical_floors_ok(idx, target_lane) {
                    let neighbors = self.neighbor_state(idx, target_lane);
                    if is_safe_lane_change(&neighbors, &mut self.rng) {
                        self.start_lane_change(idx, target_lane, LaneChangeCause::Advised);
                    }
                }
            }
        }
    }

    // ---- phase 2: mandatory exit logic ------------------------------------

    fn phase_mandatory(&mut self) {
        let layout = self.cfg.layout.clone();
        let zone_start = layout.decel_lane_start - self.cfg.lane_change_distance;
        let rightmost = layout.rightmost_mainline();
        let ramp = layout.ramp_lane();

        for idx in 0..self.vehicles.len() {
            let v = &self.vehicles[idx];
            if v.retired || v.route != Route::OffRamp || v.lane == ramp || v.is_executing() {
                continue;
            }
            // Dwell bookkeeping: stopped at the deceleration-lane end.
            if v.position >= layout.decel_lane_end() - 5.0 && v.speed <= 0.5 {
                let since = *self.vehicles[idx].dwell_since.get_or_insert(self.time);
                if self.time - since >= self.cfg.dwell_limit {
                    self.retire_missed_exit(idx);
                    continue;
                }
            } else {
                self.vehicles[idx].dwell_since = None;
            }

            let v = &self.vehicles[idx];
            let target = if v.lane == rightmost {
                if v.position >= layout.decel_lane_start && v.position <= layout.decel_lane_end()
                {
                    ramp
                } else {
                    continue;
                }
            } else {
                if v.position < zone_start {
                    continue;
                }
                v.lane + 1
            };
            let scale = self.relaxation_scale(v.position, zone_start);
            if self.gap_acceptable(idx, target, scale) {
                self.start_lane_change(idx, target, LaneChangeCause::Mandatory);
            }
        }
    }

    /// Required-gap scale: 1.0 at the start of the lane-change zone, shrinking
    /// linearly to the safety reduction factor at the deceleration-lane start
    /// and staying there beyond it.
    fn relaxation_scale(&self, position: f64, zone_start: f64) -> f64 {
        let floor = self.cfg.car_following.safety_reduction_factor;
        let span = self.cfg.layout.decel_lane_start - zone_start;
        if span <= 0.0 {
            return floor;
        }
        let progress = ((position - zone_start) / span).clamp(0.0, 1.0);
        1.0 - (1.0 - floor) * progress
    }

    // ---- phase 3: discretionary -------------------------------------------

    fn phase_discretionary(&mut self) {
        let rightmost = self.cfg.layout.rightmost_mainline();
        let zone_start = self.cfg.layout.decel_lane_start - self.cfg.lane_change_distance;

        for idx in 0..self.vehicles.len() {
            let v = &self.vehicles[idx];
            if v.retired || !matches!(v.lc_state, LcState::None) || v.lane > rightmost {
                continue;
            }
            // Exiting vehicles inside the mandatory zone are focused right.
            if v.route == Route::OffRamp && v.position >= zone_start {
                continue;
            }
            if self.time - v.last_change_time < self.cfg.discretionary_cooldown {
                continue;
            }
            let current = self.sustainable_speed(idx, v.lane);
            let mut best: Option<(u8, f64)> = None;
            for target in [v.lane.checked_sub(1), Some(v.lane + 1)]
                .into_iter()
                .flatten()
            {
                if target < 1 || target > rightmost {
                    continue;
                }
                let s = self.sustainable_speed(idx, target);
                if s >= current + self.cfg.discretionary_gain
                    && best.map_or(true, |(_, bs)| s > bs)
                {
                    best = Some((target, s));
                }
            }
            if let Some((target, _)) = best {
                if self.gap_acceptable(idx, target, 1.0) {
                    self.start_lane_change(idx, target, LaneChangeCause::Discretionary);
                }
            }
        }
    }

    /// Speed the vehicle could hold in `lane`: its desired speed on open
    /// road, the leader's speed when one is within following range.
    fn sustainable_speed(&self, idx: usize, lane: u8) -> f64 {
        let v = &self.vehicles[idx];
        match self
            .index
            .neighbors(&self.vehicles, lane, v.position, v.id)
            .0
        {
            Some(l) => {
                let leader = &self.vehicles[l];
                if leader.rear() - v.position > 100.0 {
                    v.desired_speed
                } else {
                    leader.speed.min(v.desired_speed)
                }
            }
            None => v.desired_speed,
        }
    }

    // ---- phase 4: lane-change execution ------------------------------------

    fn phase_execution(&mut self, dt: f64) {
        for idx in 0..self.vehicles.len() {
            let v = &mut self.vehicles[idx];
            if v.retired {
                continue;
            }
            if let LcState::Executing {
                elapsed,
                from_lane,
                target_lane,
                cause,
            } = v.lc_state
            {
                let elapsed = elapsed + dt;
                if elapsed >= self.cfg.lane_change_duration {
                    v.lane = target_lane;
                    v.lc_state = LcState::None;
                    v.last_change_time = self.time;
                    self.index.remove(from_lane, idx);
                } else {
                    v.lc_state = LcState::Executing {
                        elapsed,
                        from_lane,
                        target_lane,
                        cause,
                    };
                }
            }
        }
    }

    // ---- phase 5: car following --------------------------------------------

    fn phase_accelerations(&self) -> Vec<f64> {
        let p = &self.cfg.car_following;
        let ramp = self.cfg.layout.ramp_lane();
        let decel_end = self.cfg.layout.decel_lane_end();
        self.vehicles
            .iter()
            .enumerate()
            .map(|(_idx, v)| {
                if v.retired {
                    return 0.0;
                }
                let mut nearest: Option<LeaderView> = None;
                for lane in [Some(v.lane), v.executing_target()].into_iter().flatten() {
                    if let (Some(l), _) =
                        self.index.neighbors(&self.vehicles, lane, v.position, v.id)
                    {
                        let view = LeaderView {
                            net_gap: self.vehicles[l].rear() - v.position,
                            speed: self.vehicles[l].speed,
                        };
                        if nearest.map_or(true, |n| view.net_gap < n.net_gap) {
                            nearest = Some(view);
                        }
                    }
                }
                let mut accel =
                    car_following_accel(v.speed, v.desired_speed, v.max_accel, nearest, p);
                // Exiting vehicles that are not in (or committed to) the ramp
                // lane must be able to stop at the deceleration-lane end.
                if v.route == Route::OffRamp
                    && v.lane != ramp
                    && v.executing_target() != Some(ramp)
                {
                    let hold = car_following_accel(
                        v.speed,
                        v.desired_speed,
                        v.max_accel,
                        Some(LeaderView {
                            net_gap: decel_end + p.standstill_distance - v.position,
                            speed: 0.0,
                        }),
                        p,
                    );
                    accel = accel.min(hold);
                }
                accel
            })
            .collect()
    }

    // ---- phase 6: kinematics -----------------------------------------------

    fn phase_kinematics(&mut self, accels: &[f64], dt: f64) -> Result<()> {
        self.prev_positions = self.vehicles.iter().map(|v| v.position).collect();

        // Leaders by list adjacency, per occupied lane, before anyone moves.
        let mut leaders: Vec<[Option<usize>; 2]> = vec![[None, None]; self.vehicles.len()];
        for list in &self.index.lanes {
            for k in 1..list.len() {
                let idx = list[k];
                let slot = if leaders[idx][0].is_none() { 0 } else { 1 };
                leaders[idx][slot] = Some(list[k - 1]);
            }
        }

        let mut order: Vec<usize> = (0..self.vehicles.len())
            .filter(|&i| !self.vehicles[i].retired)
            .collect();
        order.sort_by(|&a, &b| {
            self.vehicles[b]
                .position
                .total_cmp(&self.vehicles[a].position)
                .then(self.vehicles[a].id.cmp(&self.vehicles[b].id))
        });

        for idx in order {
            let v = &self.vehicles[idx];
            let mut speed = (v.speed + accels[idx] * dt).clamp(0.0, v.desired_speed);
            // Hard no-overlap bound against already-updated leaders.
            for leader in leaders[idx].into_iter().flatten() {
                let l = &self.vehicles[leader];
                let allowed = (l.rear() - 0.05 - v.position) / dt;
                speed = speed.min(allowed.max(0.0));
            }
            let position = v.position + speed * dt;
            if !speed.is_finite() || !position.is_finite() {
                return Err(Error::Integrity(format!(
                    "non-finite state for vehicle {} at t={:.1}",
                    v.id, self.time
                )));
            }
            let v = &mut self.vehicles[idx];
            v.speed = speed;
            v.position = position;
        }

        // Overlap audit over every lane, dual occupancy included.
        for list in &self.index.lanes {
            for w in list.windows(2) {
                let front = &self.vehicles[w[0]];
                let back = &self.vehicles[w[1]];
                if front.rear() - back.position < -1e-9 {
                    return Err(Error::Integrity(format!(
                        "overlap between vehicles {} and {} at t={:.1}",
                        front.id, back.id, self.time
                    )));
                }
            }
        }
        Ok(())
    }

    // ---- phase 7: arrivals ---------------------------------------------------

    fn phase_arrivals(&mut self, dt: f64) {
        let lambda = self.cfg.flow_veh_hr / 3600.0 * dt;
        if lambda > 0.0 {
            let n = Poisson::new(lambda).unwrap().sample(&mut self.rng) as u64;
            for _ in 0..n {
                let pending = self.draw_vehicle();
                self.queue.push_back(pending);
            }
        }
        self.queue_peak = self.queue_peak.max(self.queue.len());

        // FIFO release: the head enters as soon as any lane has room.
        while let Some(pending) = self.queue.front().copied() {
            let mut feasible: Vec<(u8, f64)> = Vec::new();
            for lane in 1..=self.cfg.layout.rightmost_mainline() {
                match self.index.rearmost(lane) {
                    None => feasible.push((lane, pending.desired_speed)),
                    Some(r) => {
                        let rear = &self.vehicles[r];
                        let gap = rear.rear();
                        let v_in = if gap > 2.0 * pending.desired_speed {
                            pending.desired_speed
                        } else {
                            rear.speed.min(pending.desired_speed)
                        };
                        let needed = self.cfg.car_following.standstill_distance
                            + self.cfg.car_following.headway_time * v_in
                            + 0.5;
                        if gap >= needed {
                            feasible.push((lane, v_in));
                        }
                    }
                }
            }
            if feasible.is_empty() {
                break;
            }
            let (lane, speed) = feasible[self.rng.gen_range(0..feasible.len())];
            self.queue.pop_front();
            let id = self.next_id;
            self.next_id += 1;
            let vehicle = Vehicle {
                id,
                class: pending.class,
                lane,
                position: 0.0,
                speed,
                desired_speed: pending.desired_speed,
                length: pending.length,
                max_accel: pending.max_accel,
                route: pending.route,
                lc_state: LcState::None,
                entry_time: self.time,
                last_change_time: f64::NEG_INFINITY,
                dwell_since: None,
                measured_exit_time: None,
                retired: false,
            };
            if vehicle.class == VehicleClass::SmartCar {
                self.smart_ids.push(vehicle.id);
            }
            self.vehicles.push(vehicle);
            let idx = self.vehicles.len() - 1;
            self.index.insert(&self.vehicles, lane, idx);
            self.spawned += 1;
        }
    }

    fn draw_vehicle(&mut self) -> PendingVehicle {
        let u: f64 = self.rng.sample(Open01);
        let (class, route) = if u < self.cfg.hgv_fraction {
            (VehicleClass::Hgv, Route::Mainline)
        } else if u < self.cfg.hgv_fraction + self.cfg.smart_fraction {
            (VehicleClass::SmartCar, Route::OffRamp)
        } else {
            (VehicleClass::Car, Route::Mainline)
        };
        let (range, length, max_accel) = match class {
            VehicleClass::Hgv => (
                self.cfg.hgv_speed_range,
                self.cfg.hgv_length,
                self.cfg.car_following.max_accel_hgv,
            ),
            _ => (
                self.cfg.car_speed_range,
                self.cfg.car_length,
                self.cfg.car_following.max_accel,
            ),
        };
        let desired_speed = self.rng.gen_range(range.0..=range.1);
        PendingVehicle {
            class,
            desired_speed,
            length,
            max_accel,
            route,
        }
    }

    // ---- phase 8: recording ----------------------------------------------------

    fn phase_recording(&mut self, dt: f64) -> Result<()> {
        let layout = self.cfg.layout.clone();
        for idx in 0..self.vehicles.len() {
            let v = &self.vehicles[idx];
            if v.retired {
                continue;
            }
            let prev = self
                .prev_positions
                .get(idx)
                .copied()
                .unwrap_or(v.position);
            if v.position > prev {
                let travel = v.position - prev;
                for (di, &dpos) in layout.detector_positions.iter().enumerate() {
                    if prev < dpos && v.position >= dpos {
                        let frac = (dpos - prev) / travel;
                        self.detectors.push(DetectorRecord {
                            detector_index: di,
                            lane: v.lane,
                            time: self.time + dt * frac,
                            speed: v.speed,
                            vehicle_id: v.id,
                        });
                    }
                }
                if prev < layout.offramp_travel_length
                    && v.position >= layout.offramp_travel_length
                {
                    let frac = (layout.offramp_travel_length - prev) / travel;
                    self.vehicles[idx].measured_exit_time = Some(self.time + dt * frac);
                }
            }
            let v = &self.vehicles[idx];
            let done = match v.route {
                Route::Mainline => v.position >= layout.length,
                Route::OffRamp => {
                    v.lane == layout.ramp_lane() && v.position >= layout.offramp_travel_length
                }
            };
            if done {
                self.retire(idx, false);
            }
        }

        let alive = self.vehicles.iter().filter(|v| !v.retired).count() as u64;
        let accounted =
            self.retired_mainline + self.retired_offramp + self.retired_missed + alive;
        if accounted != self.spawned {
            return Err(Error::Integrity(format!(
                "conservation violated at t={:.1}: spawned {} vs accounted {}",
                self.time, self.spawned, accounted
            )));
        }
        Ok(())
    }

    // ---- shared helpers ---------------------------------------------------------

    fn retire(&mut self, idx: usize, missed: bool) {
        let v = &mut self.vehicles[idx];
        v.retired = true;
        let record = RetiredRecord {
            vehicle_id: v.id,
            class: v.class,
            route: v.route,
            entry_time: v.entry_time,
            exit_time: v.measured_exit_time,
            desired_speed: v.desired_speed,
            missed_exit: missed,
        };
        let (lane, target) = (v.lane, v.executing_target());
        self.index.remove(lane, idx);
        if let Some(t) = target {
            self.index.remove(t, idx);
        }
        self.retired.push(record);
        if missed {
            self.retired_missed += 1;
        } else {
            match record.route {
                Route::Mainline => self.retired_mainline += 1,
                Route::OffRamp => self.retired_offramp += 1,
            }
        }
    }

    fn retire_missed_exit(&mut self, idx: usize) {
        self.retire(idx, true);
    }

    fn start_lane_change(&mut self, idx: usize, target: u8, cause: LaneChangeCause) {
        let (id, time, position, from_lane) = {
            let v = &mut self.vehicles[idx];
            v.lc_state = LcState::Executing {
                elapsed: 0.0,
                from_lane: v.lane,
                target_lane: target,
                cause,
            };
            v.dwell_since = None;
            (v.id, self.time, v.position, v.lane)
        };
        self.index.insert(&self.vehicles, target, idx);
        self.lane_changes.push(LaneChangeEvent {
            vehicle_id: id,
            time,
            position,
            from_lane,
            to_lane: target,
            cause,
        });
    }

    fn neighbor_state(&self, idx: usize, target: u8) -> NeighborState {
        let v = &self.vehicles[idx];
        let (leader, follower) = self.index.neighbors(&self.vehicles, target, v.position, v.id);
        let (lead_gap, dv_lead) = match leader {
            Some(l) => (
                self.vehicles[l].rear() - v.position,
                self.vehicles[l].speed - v.speed,
            ),
            None => (f64::INFINITY, 0.0),
        };
        let (lag_gap, dv_lag) = match follower {
            Some(f) => (
                v.rear() - self.vehicles[f].position,
                self.vehicles[f].speed - v.speed,
            ),
            None => (f64::INFINITY, 0.0),
        };
        NeighborState {
            lead_gap,
            lag_gap,
            dv_lead,
            dv_lag,
        }
    }

    /// Minimal physical spacing for any lane-change start: positive net gaps
    /// with a closing-speed allowance, so a started change cannot force the
    /// hard no-overlap bound into teleport braking.
    fn physical_floors_ok(&self, idx: usize, target: u8) -> bool {
        let v = &self.vehicles[idx];
        let (leader, follower) = self.index.neighbors(&self.vehicles, target, v.position, v.id);
        if let Some(l) = leader {
            let l = &self.vehicles[l];
            let floor = 0.5 + 0.5 * (v.speed - l.speed).max(0.0);
            if l.rear() - v.position < floor {
                return false;
            }
        }
        if let Some(f) = follower {
            let f = &self.vehicles[f];
            let floor = 0.5 + 0.5 * (f.speed - v.speed).max(0.0);
            if v.rear() - f.position < floor {
                return false;
            }
        }
        true
    }

    /// Test-only injection of a fully specified vehicle, bypassing the
    /// arrival process. The occupancy index picks it up at the next step.
    #[cfg(test)]
    pub(crate) fn inject_vehicle(&mut self, mut vehicle: Vehicle) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        vehicle.id = id;
        if vehicle.class == VehicleClass::SmartCar {
            self.smart_ids.push(id);
        }
        self.vehicles.push(vehicle);
        self.spawned += 1;
        id
    }

    /// Model-side gap acceptance for mandatory and discretionary changes:
    /// physical floors plus the scaled critical gap over the straddling
    /// front-bumper spacing in the target lane.
    fn gap_acceptable(&self, idx: usize, target: u8, scale: f64) -> bool {
        if !self.physical_floors_ok(idx, target) {
            return false;
        }
        let v = &self.vehicles[idx];
        let (leader, follower) = self.index.neighbors(&self.vehicles, target, v.position, v.id);
        let (spacing, v_ref) = match (leader, follower) {
            (Some(l), Some(f)) => {
                let l = &self.vehicles[l];
                let f = &self.vehicles[f];
                (
                    l.position - f.position,
                    v.speed.max(l.speed).max(f.speed),
                )
            }
            (Some(l), None) => (f64::INFINITY, v.speed.max(self.vehicles[l].speed)),
            (None, Some(f)) => (f64::INFINITY, v.speed.max(self.vehicles[f].speed)),
            (None, None) => (f64::INFINITY, v.speed),
        };
        spacing >= scale * gipps_critical_gap(v_ref, self.cfg.gipps_delta, self.cfg.gipps_s0)
    }
}
