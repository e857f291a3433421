//! Per-vehicle delay and its per-run aggregates.

use serde::{Deserialize, Serialize};

use crate::events::RetiredRecord;
use crate::sim::vehicle::VehicleClass;

/// Delay of one retired vehicle: actual travel time over the measured length
/// minus the free-flow time at its desired speed. `None` for vehicles that
/// never crossed the measurement point (missed exits); those are reported
/// separately, never mixed into delay statistics.
pub fn compute_delay(record: &RetiredRecord, measured_length: f64) -> Option<f64> {
    if record.missed_exit {
        return None;
    }
    record
        .exit_time
        .map(|exit| exit - record.entry_time - measured_length / record.desired_speed)
}

/// Which vehicles a statistic covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassFilter {
    All,
    SmartCars,
}

impl ClassFilter {
    pub fn label(&self) -> &'static str {
        match self {
            ClassFilter::All => "all",
            ClassFilter::SmartCars => "smart_cars",
        }
    }

    fn accepts(&self, class: VehicleClass) -> bool {
        match self {
            ClassFilter::All => true,
            ClassFilter::SmartCars => class == VehicleClass::SmartCar,
        }
    }
}

/// Delays of the retired vehicles a filter selects.
pub fn delays_for(
    records: &[RetiredRecord],
    filter: ClassFilter,
    measured_length: f64,
) -> Vec<f64> {
    records
        .iter()
        .filter(|r| filter.accepts(r.class))
        .filter_map(|r| compute_delay(r, measured_length))
        .collect()
}

/// Average, population standard deviation and maximum delay of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayStats {
    pub avg: f64,
    pub std: f64,
    pub max: f64,
    pub count: usize,
}

/// Per-run statistics; `None` when nothing qualifies (reported as absent,
/// never as zero).
pub fn aggregate_stats(delays: &[f64]) -> Option<DelayStats> {
    if delays.is_empty() {
        return None;
    }
    let n = delays.len() as f64;
    let avg = delays.iter().sum::<f64>() / n;
    let var = delays.iter().map(|d| (d - avg) * (d - avg)).sum::<f64>() / n;
    let max = delays.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(DelayStats {
        avg,
        std: var.sqrt(),
        max,
        count: delays.len(),
    })
}

/// Cross-seed aggregation: the arithmetic mean of the per-run statistics,
/// with counts summed.
pub fn mean_of_runs(stats: &[DelayStats]) -> Option<DelayStats> {
    if stats.is_empty() {
        return None;
    }
    let n = stats.len() as f64;
    Some(DelayStats {
        avg: stats.iter().map(|s| s.avg).sum::<f64>() / n,
        std: stats.iter().map(|s| s.std).sum::<f64>() / n,
        max: stats.iter().map(|s| s.max).sum::<f64>() / n,
        count: stats.iter().map(|s| s.count).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::vehicle::Route;

    fn record(entry: f64, exit: Option<f64>, desired: f64, missed: bool) -> RetiredRecord {
        RetiredRecord {
            vehicle_id: 1,
            class: VehicleClass::Car,
            route: Route::Mainline,
            entry_time: entry,
            exit_time: exit,
            desired_speed: desired,
            missed_exit: missed,
        }
    }

    #[test]
    fn free_flow_travel_has_zero_delay() {
        let desired = 120.0 / 3.6;
        let r = record(10.0, Some(10.0 + 6904.0 / desired), desired, false);
        let d = compute_delay(&r, 6904.0).unwrap();
        assert!(d.abs() < 1e-9);
    }

    #[test]
    fn delay_arithmetic_on_measured_length() {
        // 250 s actual over 6904 m at a desired 120 km/h: 250 - 207.12 s.
        let desired = 120.0 / 3.6;
        let r = record(0.0, Some(250.0), desired, false);
        let d = compute_delay(&r, 6904.0).unwrap();
        assert!((d - 42.88).abs() < 1e-9, "delay {d}");
    }

    #[test]
    fn missed_exit_has_no_delay() {
        let r = record(0.0, None, 30.0, true);
        assert_eq!(compute_delay(&r, 6904.0), None);
        let r = record(0.0, Some(100.0), 30.0, true);
        assert_eq!(compute_delay(&r, 6904.0), None);
    }

    #[test]
    fn aggregate_examples() {
        let s = aggregate_stats(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!((s.avg, s.std, s.max), (5.0, 0.0, 5.0));
        let s = aggregate_stats(&[0.0, 10.0]).unwrap();
        assert_eq!((s.avg, s.std, s.max), (5.0, 5.0, 10.0));
        assert!(aggregate_stats(&[]).is_none());
    }

    #[test]
    fn mean_of_runs_rule() {
        let runs = [
            DelayStats { avg: 12.0, std: 1.0, max: 50.0, count: 10 },
            DelayStats { avg: 13.0, std: 2.0, max: 60.0, count: 20 },
            DelayStats { avg: 14.0, std: 3.0, max: 70.0, count: 30 },
        ];
        let m = mean_of_runs(&runs).unwrap();
        assert_eq!(m.avg, 13.0);
        assert_eq!(m.std, 2.0);
        assert_eq!(m.max, 60.0);
        assert_eq!(m.count, 60);
    }

    #[test]
    fn class_filter_selects_smart_cars() {
        let mut smart = record(0.0, Some(300.0), 30.0, false);
        smart.class = VehicleClass::SmartCar;
        let all = vec![record(0.0, Some(250.0), 30.0, false), smart];
        assert_eq!(delays_for(&all, ClassFilter::All, 6904.0).len(), 2);
        assert_eq!(delays_for(&all, ClassFilter::SmartCars, 6904.0).len(), 1);
    }
}
