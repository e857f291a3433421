use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of the simulated highway strip.
///
/// Mainline lanes are numbered 1 (leftmost) to `lane_count`; the
/// deceleration lane and the ramp stub behind it form lane `lane_count + 1`,
/// accessible only to exiting vehicles between `decel_lane_start` and the
/// off-ramp travel-time end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadLayout {
    pub length: f64,
    pub lane_count: u8,
    pub decel_lane_start: f64,
    pub decel_lane_length: f64,
    /// End of the travel-time measurement for both routes.
    pub offramp_travel_length: f64,
    /// Detector station positions, strictly increasing.
    pub detector_positions: Vec<f64>,
}

impl Default for RoadLayout {
    /// The studied interstate segment: 7.417 km, four lanes, deceleration
    /// lane from 6.444 km for 157 m, travel times measured over 6.904 km.
    /// Stations every 1 km from 0.5 km to 5.5 km plus one mid-way along the
    /// five-lane section.
    fn default() -> Self {
        Self {
            length: 7417.0,
            lane_count: 4,
            decel_lane_start: 6444.0,
            decel_lane_length: 157.0,
            offramp_travel_length: 6904.0,
            detector_positions: vec![500.0, 1500.0, 2500.0, 3500.0, 4500.0, 5500.0, 6522.5],
        }
    }
}

impl RoadLayout {
    pub fn decel_lane_end(&self) -> f64 {
        self.decel_lane_start + self.decel_lane_length
    }

    /// The deceleration/ramp lane index.
    pub fn ramp_lane(&self) -> u8 {
        self.lane_count + 1
    }

    /// Rightmost mainline lane.
    pub fn rightmost_mainline(&self) -> u8 {
        self.lane_count
    }

    /// Station whose measurements describe traffic around `position`.
    /// Segment boundaries sit midway between consecutive stations.
    pub fn station_for(&self, position: f64) -> usize {
        let dets = &self.detector_positions;
        for (k, w) in dets.windows(2).enumerate() {
            if position < 0.5 * (w[0] + w[1]) {
                return k;
            }
        }
        dets.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0) || self.lane_count == 0 {
            return Err(Error::Config("road needs positive length and lanes".into()));
        }
        if self.decel_lane_start + self.decel_lane_length > self.length {
            return Err(Error::Config(
                "deceleration lane must end within the segment".into(),
            ));
        }
        if !(self.offramp_travel_length > 0.0) || self.offramp_travel_length > self.length {
            return Err(Error::Config(
                "travel-time measurement must end within the segment".into(),
            ));
        }
        if self.detector_positions.is_empty() {
            return Err(Error::Config("at least one detector station required".into()));
        }
        for w in self.detector_positions.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Config(
                    "detector positions must be strictly increasing".into(),
                ));
            }
        }
        if self.detector_positions[0] < 0.0
            || *self.detector_positions.last().unwrap() > self.length
        {
            return Err(Error::Config("detectors must lie within the segment".into()));
        }
        Ok(())
    }
}
