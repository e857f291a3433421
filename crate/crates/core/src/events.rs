//! Run event records and their CSV renderings.
//!
//! All writers use fixed float formatting so a rerun of the same seeded
//! configuration reproduces identical bytes.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sim::detector::DetectorRecord;
use crate::sim::vehicle::{LaneChangeCause, Route, VehicleClass};

/// A vehicle leaving the simulation. `exit_time` is the crossing time of the
/// travel-time measurement point; vehicles retired as missed exits never
/// crossed it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetiredRecord {
    pub vehicle_id: u64,
    pub class: VehicleClass,
    pub route: Route,
    pub entry_time: f64,
    pub exit_time: Option<f64>,
    pub desired_speed: f64,
    pub missed_exit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeEvent {
    pub vehicle_id: u64,
    pub time: f64,
    pub position: f64,
    pub from_lane: u8,
    pub to_lane: u8,
    pub cause: LaneChangeCause,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvisoryEvent {
    pub vehicle_id: u64,
    pub time: f64,
    pub position: f64,
    pub lane: u8,
    pub probability: f64,
    pub p_l: f64,
}

/// One advisor probability evaluation, kept for trajectory replay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub vehicle_id: u64,
    pub time: f64,
    pub probability: f64,
}

pub fn write_retired_csv(
    path: &Path,
    records: &[RetiredRecord],
    measured_length: f64,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "id,class,route,entry_time_s,exit_time_s,delay_s,missed_exit")?;
    for r in records {
        let exit = r
            .exit_time
            .map(|t| format!("{t:.3}"))
            .unwrap_or_default();
        let delay = crate::experiment::compute_delay(r, measured_length)
            .map(|d| format!("{d:.3}"))
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{:.3},{},{},{}",
            r.vehicle_id,
            r.class.label(),
            r.route.label(),
            r.entry_time,
            exit,
            delay,
            r.missed_exit
        )?;
    }
    Ok(())
}

pub fn write_detectors_csv(path: &Path, records: &[DetectorRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "detector_index,lane,time_s,speed_ms,vehicle_id")?;
    for r in records {
        writeln!(
            out,
            "{},{},{:.3},{:.3},{}",
            r.detector_index, r.lane, r.time, r.speed, r.vehicle_id
        )?;
    }
    Ok(())
}

pub fn write_lane_changes_csv(path: &Path, events: &[LaneChangeEvent]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "id,time_s,position_m,from_lane,to_lane,cause")?;
    for e in events {
        writeln!(
            out,
            "{},{:.3},{:.2},{},{},{}",
            e.vehicle_id,
            e.time,
            e.position,
            e.from_lane,
            e.to_lane,
            e.cause.label()
        )?;
    }
    Ok(())
}

pub fn write_advisories_csv(path: &Path, events: &[AdvisoryEvent]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "vehicle_id,time_s,position_m,lane,probability_at_trigger,p_l")?;
    for e in events {
        writeln!(
            out,
            "{},{:.3},{:.2},{},{:.6},{}",
            e.vehicle_id, e.time, e.position, e.lane, e.probability, e.p_l
        )?;
    }
    Ok(())
}
