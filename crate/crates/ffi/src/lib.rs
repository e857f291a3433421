//! C ABI for the reach-probability engine.
//!
//! Opaque handles, integer status codes, and a thread-local last-error
//! message. The generated header lands in `include/offramp.h`.
//!
//! Ownership rules: every `*_new`/`*_build`/`*_load` output must be released
//! with [`offramp_table_free`]; strings passed in must be NUL-terminated
//! UTF-8; pointers must stay valid for the duration of each call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::path::Path;
use std::ptr;

use offramp::gap;
use offramp::headway::LogNormalHeadway;
use offramp::probability::{
    clamp_adjacent_speed, reach_probability, BaseCaseTable, GoalQuery, LaneParams, TableGrids,
};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OfframpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    IoError = 3,
    FormatError = 4,
    Utf8Error = 5,
}

/// Per-lane parameters of one required lane change, left to right.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OfframpLaneParams {
    /// Average lane speed (m/s).
    pub v: f64,
    /// Log-normal headway location (log meters).
    pub mu: f64,
    /// Log-normal headway scale.
    pub sigma: f64,
    /// Critical gap (m).
    pub g: f64,
    /// Lane change duration (s).
    pub t: f64,
}

/// Opaque base-case lookup table.
pub struct OfframpTable {
    inner: BaseCaseTable,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: impl Into<String>) {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message.into());
}

fn classify(err: &offramp::Error) -> OfframpStatus {
    match err {
        offramp::Error::Io(_) => OfframpStatus::IoError,
        offramp::Error::Json(_) | offramp::Error::TableFormat(_) => OfframpStatus::FormatError,
        _ => OfframpStatus::InvalidArgument,
    }
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `cap`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must point to at least `cap` writable bytes, or be NULL (then only
/// the length is returned).
#[no_mangle]
pub unsafe extern "C" fn offramp_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let message = slot.borrow();
        let bytes = message.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Build the default normalized lookup table.
///
/// # Safety
/// `out` must be a valid pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn offramp_table_build_default(
    trials_per_cell: u64,
    seed: u64,
    out: *mut *mut OfframpTable,
) -> OfframpStatus {
    if out.is_null() {
        return OfframpStatus::NullPointer;
    }
    match BaseCaseTable::build(TableGrids::default_grids(), trials_per_cell, seed) {
        Ok((table, _)) => {
            *out = Box::into_raw(Box::new(OfframpTable { inner: table }));
            OfframpStatus::Ok
        }
        Err(err) => {
            set_error(err.to_string());
            *out = ptr::null_mut();
            classify(&err)
        }
    }
}

/// Load a table from a JSON file produced by `offramp_table_save` or the
/// `offramp table build` command.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn offramp_table_load(
    path: *const c_char,
    out: *mut *mut OfframpTable,
) -> OfframpStatus {
    if path.is_null() || out.is_null() {
        return OfframpStatus::NullPointer;
    }
    let Ok(path) = CStr::from_ptr(path).to_str() else {
        set_error("path is not valid UTF-8");
        return OfframpStatus::Utf8Error;
    };
    match BaseCaseTable::load(Path::new(path)) {
        Ok(table) => {
            *out = Box::into_raw(Box::new(OfframpTable { inner: table }));
            OfframpStatus::Ok
        }
        Err(err) => {
            set_error(err.to_string());
            *out = ptr::null_mut();
            classify(&err)
        }
    }
}

/// Persist a table to a JSON file.
///
/// # Safety
/// `table` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn offramp_table_save(
    table: *const OfframpTable,
    path: *const c_char,
) -> OfframpStatus {
    if table.is_null() || path.is_null() {
        return OfframpStatus::NullPointer;
    }
    let Ok(path) = CStr::from_ptr(path).to_str() else {
        set_error("path is not valid UTF-8");
        return OfframpStatus::Utf8Error;
    };
    match (*table).inner.save(Path::new(path)) {
        Ok(()) => OfframpStatus::Ok,
        Err(err) => {
            set_error(err.to_string());
            classify(&err)
        }
    }
}

/// Release a table handle. NULL is a no-op.
///
/// # Safety
/// `table` must have come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn offramp_table_free(table: *mut OfframpTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

fn convert_lanes(
    lanes: *const OfframpLaneParams,
    lane_count: usize,
) -> Result<Vec<LaneParams>, String> {
    let raw = unsafe { std::slice::from_raw_parts(lanes, lane_count) };
    raw.iter()
        .map(|l| {
            if !(l.v > 0.0) || !(l.g > 0.0) || !(l.t > 0.0) || !(l.sigma >= 0.0) {
                return Err(format!(
                    "lane parameters out of range: v={} g={} t={} sigma={}",
                    l.v, l.g, l.t, l.sigma
                ));
            }
            if !l.mu.is_finite() || !l.sigma.is_finite() {
                return Err("mu and sigma must be finite".into());
            }
            Ok(LaneParams {
                v: l.v,
                headway: LogNormalHeadway::new(l.mu, l.sigma),
                g: l.g,
                t: l.t,
            })
        })
        .collect()
}

/// Probability of reaching a goal `d` meters ahead, `lane_count` lane
/// changes over, at ego speed `v1`.
///
/// # Safety
/// `table` must be a live handle, `lanes` must point to `lane_count`
/// entries, `out_probability` must be valid.
#[no_mangle]
pub unsafe extern "C" fn offramp_reach_probability(
    table: *const OfframpTable,
    d: f64,
    v1: f64,
    lanes: *const OfframpLaneParams,
    lane_count: usize,
    out_probability: *mut f64,
) -> OfframpStatus {
    if table.is_null() || lanes.is_null() || out_probability.is_null() {
        return OfframpStatus::NullPointer;
    }
    if !(d >= 0.0) || !(v1 > 0.0) || lane_count == 0 {
        set_error(format!(
            "need d >= 0, v1 > 0 and at least one lane, got d={d} v1={v1} lanes={lane_count}"
        ));
        return OfframpStatus::InvalidArgument;
    }
    let lanes = match convert_lanes(lanes, lane_count) {
        Ok(l) => l,
        Err(message) => {
            set_error(message);
            return OfframpStatus::InvalidArgument;
        }
    };
    let query = GoalQuery { d, v1, lanes };
    *out_probability = reach_probability(&query, &(*table).inner);
    OfframpStatus::Ok
}

/// Single lane-change probability (one-lane special case of the above).
///
/// # Safety
/// Same rules as `offramp_reach_probability`.
#[no_mangle]
pub unsafe extern "C" fn offramp_single_change_probability(
    table: *const OfframpTable,
    d: f64,
    v1: f64,
    lane: *const OfframpLaneParams,
    out_probability: *mut f64,
) -> OfframpStatus {
    offramp_reach_probability(table, d, v1, lane, 1, out_probability)
}

/// Model-side critical gap: delta * v + s0.
#[no_mangle]
pub extern "C" fn offramp_gipps_critical_gap(v: f64, delta: f64, s0: f64) -> f64 {
    gap::gipps_critical_gap(v, delta, s0)
}

/// Critical gap to the adjacent-lane leader with noise term `eps`.
#[no_mangle]
pub extern "C" fn offramp_toledo_lead_critical_gap(dv_lead: f64, eps: f64) -> f64 {
    gap::toledo_lead_critical_gap(dv_lead, eps)
}

/// Critical gap to the adjacent-lane follower with noise term `eps`.
#[no_mangle]
pub extern "C" fn offramp_toledo_lag_critical_gap(dv_lag: f64, eps: f64) -> f64 {
    gap::toledo_lag_critical_gap(dv_lag, eps)
}

/// Adjacent-speed clamp rule used when composing multi-lane queries.
#[no_mangle]
pub extern "C" fn offramp_clamp_adjacent_speed(v_prev: f64, v_next: f64, v_l: f64) -> f64 {
    clamp_adjacent_speed(v_prev, v_next, v_l)
}
