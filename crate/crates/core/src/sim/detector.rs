//! Detector stations, lane-parameter estimation and the per-segment
//! parameter tables the advisor reads.
//!
//! Stations record passage time and speed per vehicle per lane. Headway
//! distances are reconstructed from consecutive same-lane passages as
//! time gap times follower speed, then fit to a log-normal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::headway::{fit_lognormal, LogNormalHeadway};
use crate::sim::layout::RoadLayout;

/// One vehicle passing one detector station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorRecord {
    pub detector_index: usize,
    pub lane: u8,
    pub time: f64,
    pub speed: f64,
    pub vehicle_id: u64,
}

/// Average speed and headway distribution for one lane, estimated from
/// detector passages inside `window` (a closed time interval).
///
/// Needs at least three passages (two headway samples); fewer is an
/// insufficient-data error and the caller falls back.
pub fn estimate_lane_params(
    records: &[DetectorRecord],
    lane: u8,
    window: (f64, f64),
) -> Result<(f64, LogNormalHeadway)> {
    let mut passages: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.lane == lane && r.time >= window.0 && r.time <= window.1)
        .map(|r| (r.time, r.speed))
        .collect();
    passages.sort_by(|a, b| a.0.total_cmp(&b.0));
    if passages.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: passages.len(),
        });
    }
    let v = passages.iter().map(|p| p.1).sum::<f64>() / passages.len() as f64;
    // headway distance = time gap to the predecessor x follower speed
    let samples: Vec<f64> = passages
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * w[1].1)
        .collect();
    let headway = fit_lognormal(&samples)?;
    Ok((v, headway))
}

/// Where a lane estimate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateSource {
    Measured,
    /// Most recent valid estimate carried forward.
    Carried,
    /// Configured default; no valid estimate ever produced.
    Default,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneEstimate {
    pub v: f64,
    pub headway: LogNormalHeadway,
    pub source: EstimateSource,
}

/// Per-station, per-lane traffic parameters: `estimates[station][lane - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentParamsTable {
    pub station_positions: Vec<f64>,
    pub estimates: Vec<Vec<LaneEstimate>>,
}

impl SegmentParamsTable {
    /// Build from a full run's detector records (one estimate per station and
    /// lane over the whole horizon). Lanes without enough passages get the
    /// default estimate.
    pub fn from_records(
        records: &[DetectorRecord],
        layout: &RoadLayout,
        horizon: f64,
        default: LaneEstimate,
    ) -> Self {
        Self::from_runs(&[records], layout, horizon, default)
    }

    /// Build from several runs' records, pooling speeds and headway samples
    /// across runs. Consecutive-passage gaps are only formed within a run;
    /// passage times from different runs are not comparable.
    pub fn from_runs(
        per_run: &[&[DetectorRecord]],
        layout: &RoadLayout,
        horizon: f64,
        default: LaneEstimate,
    ) -> Self {
        let lanes = layout.ramp_lane();
        let stations = layout.detector_positions.len();
        let estimates = (0..stations)
            .map(|station| {
                (1..=lanes)
                    .map(|lane| {
                        let mut speeds = Vec::new();
                        let mut samples = Vec::new();
                        for records in per_run {
                            let mut passages: Vec<(f64, f64)> = records
                                .iter()
                                .filter(|r| {
                                    r.detector_index == station
                                        && r.lane == lane
                                        && r.time >= 0.0
                                        && r.time <= horizon
                                })
                                .map(|r| (r.time, r.speed))
                                .collect();
                            passages.sort_by(|a, b| a.0.total_cmp(&b.0));
                            speeds.extend(passages.iter().map(|p| p.1));
                            samples
                                .extend(passages.windows(2).map(|w| (w[1].0 - w[0].0) * w[1].1));
                        }
                        match fit_lognormal(&samples) {
                            Ok(headway) if !speeds.is_empty() => LaneEstimate {
                                v: speeds.iter().sum::<f64>() / speeds.len() as f64,
                                headway,
                                source: EstimateSource::Measured,
                            },
                            _ => default,
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            station_positions: layout.detector_positions.clone(),
            estimates,
        }
    }

    /// Uniform table from the default estimate (used when no baseline data
    /// exists yet).
    pub fn all_default(layout: &RoadLayout, default: LaneEstimate) -> Self {
        Self {
            station_positions: layout.detector_positions.clone(),
            estimates: vec![
                vec![default; layout.ramp_lane() as usize];
                layout.detector_positions.len()
            ],
        }
    }

    pub fn lane_estimate(&self, station: usize, lane: u8) -> &LaneEstimate {
        &self.estimates[station][(lane - 1) as usize]
    }
}

/// Online estimator: refreshes a [`SegmentParamsTable`] every
/// `refresh_every` seconds from the trailing `window` seconds of records,
/// carrying the last valid estimate per lane where data is thin.
#[derive(Debug)]
pub struct RollingEstimator {
    window: f64,
    refresh_every: f64,
    next_refresh: f64,
    current: SegmentParamsTable,
    /// Estimates that had to fall back to carried or default values, for
    /// run diagnostics.
    pub fallback_count: u64,
}

impl RollingEstimator {
    pub fn new(layout: &RoadLayout, window: f64, refresh_every: f64, default: LaneEstimate) -> Self {
        Self {
            window,
            refresh_every,
            next_refresh: refresh_every,
            current: SegmentParamsTable::all_default(layout, default),
            fallback_count: 0,
        }
    }

    pub fn table(&self) -> &SegmentParamsTable {
        &self.current
    }

    /// Called once per step; refreshes when due.
    pub fn maybe_refresh(&mut self, now: f64, records: &[DetectorRecord], layout: &RoadLayout) {
        if now + 1e-9 < self.next_refresh {
            return;
        }
        self.next_refresh += self.refresh_every;
        let from = (now - self.window).max(0.0);
        let lanes = layout.ramp_lane();
        let mut per_station: Vec<Vec<DetectorRecord>> =
            vec![Vec::new(); layout.detector_positions.len()];
        for r in records.iter().filter(|r| r.time >= from && r.time <= now) {
            per_station[r.detector_index].push(*r);
        }
        for (station, station_records) in per_station.iter().enumerate() {
            for lane in 1..=lanes {
                let slot = &mut self.current.estimates[station][(lane - 1) as usize];
                match estimate_lane_params(station_records, lane, (from, now)) {
                    Ok((v, headway)) => {
                        *slot = LaneEstimate {
                            v,
                            headway,
                            source: EstimateSource::Measured,
                        };
                    }
                    Err(_) => {
                        // keep the last estimate; mark carried unless it is
                        // still the configured default
                        if slot.source == EstimateSource::Measured {
                            slot.source = EstimateSource::Carried;
                        }
                        self.fallback_count += 1;
                    }
                }
            }
        }
    }
}
