//! Scenario configuration file format.
//!
//! A TOML document describing one experiment: geometry, demand, behavior
//! parameters, advisory threshold (or baseline), seeds and horizon. Every
//! default mirrors the studied interstate setup, so an empty document is a
//! valid baseline scenario.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::advisor::AdvisoryConfig;
use crate::error::{Error, Result};
use crate::sim::following::CarFollowingParams;
use crate::sim::layout::RoadLayout;
use crate::sim::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Baseline,
    Advised,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// Input flow q in veh/hr.
    pub flow_veh_hr: f64,
    /// Share of smart cars in percent (r).
    pub smart_pct: f64,
    /// Share of heavy goods vehicles in percent.
    pub hgv_pct: f64,
    pub mode: Mode,
    /// Advisory threshold; required when mode is advised.
    pub p_l: Option<f64>,
    pub seeds: Vec<u64>,
    pub horizon_s: f64,
    pub dt_s: f64,
    pub road: RoadLayout,
    pub car_following: CarFollowingParams,
    /// Desired-speed bands in km/h.
    pub car_speed_kmh: (f64, f64),
    pub hgv_speed_kmh: (f64, f64),
    pub car_length_m: f64,
    pub hgv_length_m: f64,
    pub lane_change_distance_m: f64,
    pub lane_change_duration_s: f64,
    pub gipps_delta_s: f64,
    pub gipps_s0_m: f64,
    /// Adjacent-speed clamp window (m/s).
    pub v_l_ms: f64,
    pub reevaluation_period_s: f64,
    pub discretionary_gain_ms: f64,
    pub discretionary_cooldown_s: f64,
    pub dwell_limit_s: f64,
    pub default_lane_speed_ms: f64,
    pub default_headway_mu: f64,
    pub default_headway_sigma: f64,
    /// Advised runs estimate lane parameters online from this run's own
    /// detectors instead of injected baseline-derived parameters.
    pub online_estimation: bool,
    pub estimator_window_s: f64,
    pub estimator_refresh_s: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            flow_veh_hr: 6400.0,
            smart_pct: 2.0,
            hgv_pct: 2.0,
            mode: Mode::Baseline,
            p_l: None,
            seeds: vec![32, 37, 42],
            horizon_s: 3600.0,
            dt_s: 0.1,
            road: RoadLayout::default(),
            car_following: CarFollowingParams::default(),
            car_speed_kmh: (112.0, 128.0),
            hgv_speed_kmh: (95.0, 105.0),
            car_length_m: 4.5,
            hgv_length_m: 12.0,
            lane_change_distance_m: 1600.0,
            lane_change_duration_s: 3.0,
            gipps_delta_s: 1.6,
            gipps_s0_m: 1.0,
            v_l_ms: 4.0,
            reevaluation_period_s: 1.0,
            discretionary_gain_ms: 2.0,
            discretionary_cooldown_s: 10.0,
            dwell_limit_s: 60.0,
            default_lane_speed_ms: 30.0,
            default_headway_mu: 45.0_f64.ln(),
            default_headway_sigma: 0.5,
            online_estimation: false,
            estimator_window_s: 300.0,
            estimator_refresh_s: 60.0,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.smart_pct < 0.0 || self.hgv_pct < 0.0 || self.smart_pct + self.hgv_pct > 100.0 {
            return Err(Error::Config(format!(
                "class percentages invalid: smart {} + hgv {}",
                self.smart_pct, self.hgv_pct
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed required".into()));
        }
        if self.mode == Mode::Advised {
            match self.p_l {
                Some(p) if p > 0.0 && p < 1.0 => {}
                other => {
                    return Err(Error::Config(format!(
                        "advised mode needs p_l in (0, 1), got {other:?}"
                    )))
                }
            }
        }
        self.to_sim_config().validate()
    }

    pub fn to_sim_config(&self) -> SimConfig {
        SimConfig {
            layout: self.road.clone(),
            dt: self.dt_s,
            horizon: self.horizon_s,
            flow_veh_hr: self.flow_veh_hr,
            hgv_fraction: self.hgv_pct / 100.0,
            smart_fraction: self.smart_pct / 100.0,
            car_following: self.car_following,
            car_speed_range: (self.car_speed_kmh.0 / 3.6, self.car_speed_kmh.1 / 3.6),
            hgv_speed_range: (self.hgv_speed_kmh.0 / 3.6, self.hgv_speed_kmh.1 / 3.6),
            car_length: self.car_length_m,
            hgv_length: self.hgv_length_m,
            lane_change_distance: self.lane_change_distance_m,
            lane_change_duration: self.lane_change_duration_s,
            gipps_delta: self.gipps_delta_s,
            gipps_s0: self.gipps_s0_m,
            discretionary_gain: self.discretionary_gain_ms,
            discretionary_cooldown: self.discretionary_cooldown_s,
            dwell_limit: self.dwell_limit_s,
            default_lane_speed: self.default_lane_speed_ms,
            default_headway_mu: self.default_headway_mu,
            default_headway_sigma: self.default_headway_sigma,
            estimator_window: self.estimator_window_s,
            estimator_refresh: self.estimator_refresh_s,
        }
    }

    /// Advisory configuration for advised mode.
    pub fn advisory_config(&self) -> Result<AdvisoryConfig> {
        let p_l = self.p_l.ok_or_else(|| {
            Error::Config("advised mode needs p_l".into())
        })?;
        let cfg = AdvisoryConfig {
            p_l,
            delta: self.gipps_delta_s,
            s0: self.gipps_s0_m,
            t_lc: self.lane_change_duration_s,
            v_l: self.v_l_ms,
            reevaluation_period: self.reevaluation_period_s,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
