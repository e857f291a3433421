//! Histogram of where smart cars made their last lane change before
//! reaching the rightmost mainline lane.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::events::LaneChangeEvent;

/// Default binning: 120 bins over the first 6 km.
pub const HISTOGRAM_BINS: usize = 120;
pub const HISTOGRAM_RANGE: (f64, f64) = (0.0, 6000.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub range: (f64, f64),
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        (self.range.1 - self.range.0) / self.counts.len() as f64
    }

    pub fn bin_edges(&self, bin: usize) -> (f64, f64) {
        let w = self.bin_width();
        (
            self.range.0 + bin as f64 * w,
            self.range.0 + (bin + 1) as f64 * w,
        )
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Position of the final arrival into `rightmost_lane` for each listed
/// vehicle, from its lane-change events.
pub fn last_arrival_positions(
    events: &[LaneChangeEvent],
    vehicle_ids: &HashSet<u64>,
    rightmost_lane: u8,
) -> Vec<f64> {
    let mut last: HashMap<u64, f64> = HashMap::new();
    for e in events {
        if e.to_lane == rightmost_lane && vehicle_ids.contains(&e.vehicle_id) {
            last.insert(e.vehicle_id, e.position);
        }
    }
    let mut ids: Vec<u64> = last.keys().copied().collect();
    ids.sort_unstable();
    ids.into_iter().map(|id| last[&id]).collect()
}

/// Bin positions over `range`. Out-of-range positions clamp into the edge
/// bins so the histogram mass always equals the qualifying-vehicle count.
pub fn last_lane_change_histogram(positions: &[f64], bins: usize, range: (f64, f64)) -> Histogram {
    assert!(bins >= 1 && range.1 > range.0);
    let mut counts = vec![0u64; bins];
    let w = (range.1 - range.0) / bins as f64;
    for &p in positions {
        let bin = (((p - range.0) / w).floor() as i64).clamp(0, bins as i64 - 1) as usize;
        counts[bin] += 1;
    }
    Histogram { range, counts }
}

pub fn write_histogram_csv(path: &Path, hist: &Histogram) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "bin_lo_m,bin_hi_m,count")?;
    for (bin, count) in hist.counts.iter().enumerate() {
        let (lo, hi) = hist.bin_edges(bin);
        writeln!(out, "{lo:.1},{hi:.1},{count}")?;
    }
    Ok(())
}
