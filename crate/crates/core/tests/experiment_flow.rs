//! End-to-end experiment flow on a deliberately small matrix: baseline runs,
//! parameter injection, advised runs, aggregation, reporting and histogram
//! extraction.

use std::sync::Arc;

use offramp::experiment::{
    expand_plan, last_lane_change_histogram, render_text_table, results_table, run_matrix,
    write_results_csv, MatrixResults, MatrixSpec, HISTOGRAM_BINS, HISTOGRAM_RANGE,
};
use offramp::probability::{BaseCaseTable, TableGrids};
use offramp::scenario::ScenarioConfig;

fn tiny_spec() -> MatrixSpec {
    MatrixSpec {
        flows: vec![9600.0],
        smart_pcts: vec![10.0],
        thresholds: vec![0.9],
        seeds: vec![32, 37],
    }
}

fn tiny_base() -> ScenarioConfig {
    let mut base = ScenarioConfig::default();
    base.horizon_s = 500.0;
    base
}

#[test]
fn tiny_matrix_end_to_end() {
    let table = Arc::new(
        BaseCaseTable::build(TableGrids::default_grids(), 5_000, 99)
            .unwrap()
            .0,
    );
    let spec = tiny_spec();
    assert_eq!(expand_plan(&spec).len(), 4);

    let results = run_matrix(&tiny_base(), &spec, table, 2).unwrap();
    assert_eq!(results.runs.len(), 4);
    assert_eq!(results.cells.len(), 1);

    // baseline-derived parameters cover every station and mainline lane
    let params = &results.cells[0].params;
    assert_eq!(params.estimates.len(), 7);
    for station in &params.estimates {
        assert_eq!(station.len(), 5);
    }

    // persistence roundtrip of the results store
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("results.json");
    results.save(&path).unwrap();
    let loaded = MatrixResults::load(&path).unwrap();
    assert_eq!(results, loaded);

    // report: one baseline + one advised row per class view
    let rows = results_table(&results).unwrap();
    assert_eq!(rows.len(), 4);
    let advised_all = rows
        .iter()
        .find(|r| r.p_l.is_some() && r.class == offramp::experiment::ClassFilter::All)
        .unwrap();
    assert!(advised_all.pct_avg.is_some());

    let csv_path = dir.path().join("table.csv");
    write_results_csv(&csv_path, &rows).unwrap();
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(csv.lines().count(), 5);

    let text = render_text_table(&rows);
    assert!(text.contains("baseline"));
    assert!(text.contains("0.9"));

    // histogram over the advised runs' last-change positions
    let positions: Vec<f64> = results
        .runs
        .iter()
        .filter(|r| r.p_l.is_some())
        .flat_map(|r| r.last_change_positions.iter().copied())
        .collect();
    assert!(!positions.is_empty());
    let hist = last_lane_change_histogram(&positions, HISTOGRAM_BINS, HISTOGRAM_RANGE);
    assert_eq!(hist.total(), positions.len() as u64);
}

#[test]
fn matrix_results_are_seed_reproducible() {
    let table = Arc::new(
        BaseCaseTable::build(TableGrids::default_grids(), 5_000, 99)
            .unwrap()
            .0,
    );
    let mut base = tiny_base();
    base.horizon_s = 300.0;
    let spec = MatrixSpec {
        flows: vec![6400.0],
        smart_pcts: vec![6.0],
        thresholds: vec![0.85],
        seeds: vec![32],
    };
    let a = run_matrix(&base, &spec, table.clone(), 2).unwrap();
    let b = run_matrix(&base, &spec, table, 1).unwrap();
    // identical regardless of worker count
    assert_eq!(a, b);
}
