//! Scenario-matrix execution.
//!
//! A matrix sweeps flow x smart-car share x threshold x seed. Per cell
//! (flow, share) the baseline runs execute first; their pooled detector
//! records yield the frozen per-segment lane parameters injected into every
//! advised run of that cell, mirroring the two-phase measurement procedure.

use std::collections::HashSet;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::delay::{aggregate_stats, delays_for, ClassFilter, DelayStats};
use super::histogram::last_arrival_positions;
use crate::error::{Error, Result};
use crate::probability::BaseCaseTable;
use crate::scenario::{Mode, ScenarioConfig};
use crate::sim::detector::SegmentParamsTable;
use crate::sim::vehicle::LaneChangeCause;
use crate::sim::{AdvisorSetup, ParamsMode, RunOutput, Simulation};

/// The sweep axes. Defaults reproduce the full study matrix:
/// 2 flows x 3 shares x (baseline + 6 thresholds) x 3 seeds = 126 runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatrixSpec {
    pub flows: Vec<f64>,
    pub smart_pcts: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for MatrixSpec {
    fn default() -> Self {
        Self {
            flows: vec![6400.0, 9600.0],
            smart_pcts: vec![2.0, 6.0, 10.0],
            thresholds: vec![0.99, 0.95, 0.9, 0.85, 0.8, 0.75],
            seeds: vec![32, 37, 42],
        }
    }
}

/// One planned run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunPlan {
    pub flow: f64,
    pub smart_pct: f64,
    pub p_l: Option<f64>,
    pub seed: u64,
}

/// Every run the matrix will execute, baselines first within each cell.
pub fn expand_plan(spec: &MatrixSpec) -> Vec<RunPlan> {
    let mut plan = Vec::new();
    for &flow in &spec.flows {
        for &smart_pct in &spec.smart_pcts {
            for &seed in &spec.seeds {
                plan.push(RunPlan {
                    flow,
                    smart_pct,
                    p_l: None,
                    seed,
                });
            }
            for &p_l in &spec.thresholds {
                for &seed in &spec.seeds {
                    plan.push(RunPlan {
                        flow,
                        smart_pct,
                        p_l: Some(p_l),
                        seed,
                    });
                }
            }
        }
    }
    plan
}

/// Aggregates of one finished run, small enough to persist for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub flow: f64,
    pub smart_pct: f64,
    pub p_l: Option<f64>,
    pub seed: u64,
    pub all_stats: Option<DelayStats>,
    pub smart_stats: Option<DelayStats>,
    pub spawned: u64,
    pub retired: u64,
    pub missed_exits: u64,
    pub on_road_at_end: u64,
    pub queue_peak: usize,
    pub advisories: u64,
    pub changes_advised: u64,
    pub changes_mandatory: u64,
    pub changes_discretionary: u64,
    /// Smart cars' final arrival positions into the rightmost mainline lane.
    pub last_change_positions: Vec<f64>,
}

pub fn summarize_run(
    flow: f64,
    smart_pct: f64,
    p_l: Option<f64>,
    output: &RunOutput,
    scenario: &ScenarioConfig,
) -> RunSummary {
    let measured = scenario.road.offramp_travel_length;
    let all = delays_for(&output.retired, ClassFilter::All, measured);
    let smart = delays_for(&output.retired, ClassFilter::SmartCars, measured);
    let smart_ids: HashSet<u64> = output.smart_ids.iter().copied().collect();
    let positions = last_arrival_positions(
        &output.lane_changes,
        &smart_ids,
        scenario.road.lane_count,
    );
    let count_cause = |cause: LaneChangeCause| {
        output
            .lane_changes
            .iter()
            .filter(|e| e.cause == cause)
            .count() as u64
    };
    RunSummary {
        flow,
        smart_pct,
        p_l,
        seed: output.seed,
        all_stats: aggregate_stats(&all),
        smart_stats: aggregate_stats(&smart),
        spawned: output.spawned,
        retired: output.retired.len() as u64,
        missed_exits: output.missed_exits,
        on_road_at_end: output.on_road_at_end,
        queue_peak: output.queue_peak,
        advisories: output.advisories.len() as u64,
        changes_advised: count_cause(LaneChangeCause::Advised),
        changes_mandatory: count_cause(LaneChangeCause::Mandatory),
        changes_discretionary: count_cause(LaneChangeCause::Discretionary),
        last_change_positions: positions,
    }
}

/// Baseline-derived lane parameters of one matrix cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub flow: f64,
    pub smart_pct: f64,
    pub params: SegmentParamsTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixResults {
    pub runs: Vec<RunSummary>,
    pub cells: Vec<CellParams>,
}

impl MatrixResults {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Execute the full matrix. `jobs` bounds the worker pool (0 = all cores).
/// Runs are independent and seeded, so results do not depend on scheduling.
pub fn run_matrix(
    base: &ScenarioConfig,
    spec: &MatrixSpec,
    table: Arc<BaseCaseTable>,
    jobs: usize,
) -> Result<MatrixResults> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| run_matrix_inner(base, spec, table))
}

fn run_matrix_inner(
    base: &ScenarioConfig,
    spec: &MatrixSpec,
    table: Arc<BaseCaseTable>,
) -> Result<MatrixResults> {
    let mut runs = Vec::new();
    let mut cells = Vec::new();
    for &flow in &spec.flows {
        for &smart_pct in &spec.smart_pcts {
            let mut scenario = base.clone();
            scenario.flow_veh_hr = flow;
            scenario.smart_pct = smart_pct;
            scenario.mode = Mode::Baseline;
            scenario.p_l = None;
            scenario.validate()?;

            let baseline_outputs: Vec<RunOutput> = spec
                .seeds
                .par_iter()
                .map(|&seed| {
                    Simulation::new(scenario.to_sim_config(), None, seed)?.run()
                })
                .collect::<Result<_>>()?;
            for output in &baseline_outputs {
                runs.push(summarize_run(flow, smart_pct, None, output, &scenario));
            }

            let record_slices: Vec<&[_]> = baseline_outputs
                .iter()
                .map(|o| o.detectors.as_slice())
                .collect();
            let params = Arc::new(SegmentParamsTable::from_runs(
                &record_slices,
                &scenario.road,
                scenario.horizon_s,
                scenario.to_sim_config().default_lane_estimate(),
            ));
            cells.push(CellParams {
                flow,
                smart_pct,
                params: (*params).clone(),
            });

            let plan: Vec<(f64, u64)> = spec
                .thresholds
                .iter()
                .flat_map(|&p| spec.seeds.iter().map(move |&s| (p, s)))
                .collect();
            let advised: Vec<RunSummary> = plan
                .par_iter()
                .map(|&(p_l, seed)| {
                    let mut sc = scenario.clone();
                    sc.mode = Mode::Advised;
                    sc.p_l = Some(p_l);
                    let setup = AdvisorSetup {
                        config: sc.advisory_config()?,
                        table: table.clone(),
                        params: ParamsMode::Offline(params.clone()),
                    };
                    let output = Simulation::new(sc.to_sim_config(), Some(setup), seed)?.run()?;
                    Ok(summarize_run(flow, smart_pct, Some(p_l), &output, &sc))
                })
                .collect::<Result<_>>()?;
            runs.extend(advised);
        }
    }
    Ok(MatrixResults { runs, cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_study_plan_has_126_runs() {
        let plan = expand_plan(&MatrixSpec::default());
        assert_eq!(plan.len(), 126);
        let baselines = plan.iter().filter(|p| p.p_l.is_none()).count();
        assert_eq!(baselines, 18);
    }

    #[test]
    fn plan_covers_every_combination_once() {
        let spec = MatrixSpec {
            flows: vec![6400.0],
            smart_pcts: vec![2.0, 10.0],
            thresholds: vec![0.9, 0.8],
            seeds: vec![1, 2],
        };
        let plan = expand_plan(&spec);
        assert_eq!(plan.len(), 2 * (1 + 2) * 2);
        let mut seen = std::collections::HashSet::new();
        for p in &plan {
            assert!(seen.insert((
                p.flow.to_bits(),
                p.smart_pct.to_bits(),
                p.p_l.map(f64::to_bits),
                p.seed
            )));
        }
    }
}
