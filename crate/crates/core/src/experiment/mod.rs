//! Experiment harness: delay statistics, scenario matrices, histograms and
//! result tables.

mod delay;
mod histogram;
mod matrix;
mod report;

pub use delay::{aggregate_stats, compute_delay, delays_for, mean_of_runs, ClassFilter, DelayStats};
pub use histogram::{
    last_arrival_positions, last_lane_change_histogram, write_histogram_csv, Histogram,
    HISTOGRAM_BINS, HISTOGRAM_RANGE,
};
pub use matrix::{expand_plan, run_matrix, summarize_run, MatrixResults, MatrixSpec, RunPlan, RunSummary};
pub use report::{render_text_table, results_table, write_results_csv, ReportRow};
