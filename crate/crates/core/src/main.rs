//! Command-line harness: build probability tables, run scenarios and
//! matrices, render reports, and cross-check the probability model against
//! direct Monte Carlo simulation.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use offramp::error::{Error, Result};
use offramp::events;
use offramp::experiment::{
    self, last_arrival_positions, last_lane_change_histogram, write_histogram_csv,
    MatrixResults, MatrixSpec, HISTOGRAM_BINS, HISTOGRAM_RANGE,
};
use offramp::headway::LogNormalHeadway;
use offramp::probability::{
    chained_monte_carlo, reach_probability, BaseCaseTable, GoalQuery, LaneParams, TableGrids,
};
use offramp::scenario::{Mode, ScenarioConfig};
use offramp::sim::detector::SegmentParamsTable;
use offramp::sim::{AdvisorSetup, ParamsMode, Simulation};

#[derive(Parser)]
#[command(name = "offramp", version, about = "Highway diverge advance-warning study")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lookup-table maintenance.
    Table {
        #[command(subcommand)]
        command: TableCommand,
    },
    /// Run one scenario (every seed in its config) and write event CSVs.
    Run(RunArgs),
    /// Run a full scenario matrix and persist the summaries.
    Matrix(MatrixArgs),
    /// Render result tables and histograms from stored matrix results.
    Report(ReportArgs),
    /// Compare the probability model against direct Monte Carlo simulation.
    Oracle(OracleArgs),
}

#[derive(Subcommand)]
enum TableCommand {
    /// Build the normalized base-case table and write it to disk.
    Build {
        #[arg(long, default_value = "table.json")]
        out: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 32)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario TOML; defaults apply for every omitted key.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run only this seed instead of the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for event CSVs.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Base-case table (required for advised scenarios).
    #[arg(long)]
    table: Option<PathBuf>,
    /// Baseline-derived lane parameters (JSON). Without it an advised run
    /// estimates parameters online from its own detectors.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Args)]
struct MatrixArgs {
    /// Scenario TOML used as the base of every cell.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Matrix axes TOML (flows, smart_pcts, thresholds, seeds).
    #[arg(long)]
    axes: Option<PathBuf>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Base-case table file; built on the fly when omitted.
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Matrix results JSON produced by `matrix`.
    #[arg(long, default_value = "results/results.json")]
    results: PathBuf,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    /// Base-case table file; built on the fly when omitted.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    n2: usize,
    #[arg(long, default_value_t = 10)]
    n3: usize,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 1766)]
    seed: u64,
    /// Fail (exit 1) if any query misses this tolerance.
    #[arg(long, default_value_t = 0.04)]
    tolerance: f64,
}

fn main() {
    if let Err(err) = dispatch() {
        eprintln!("error: {err}");
        std::process::exit(1);
    }
}

fn dispatch() -> Result<()> {
    match Cli::parse().command {
        Command::Table { command } => match command {
            TableCommand::Build { out, trials, seed } => table_build(&out, trials, seed),
        },
        Command::Run(args) => run_scenario(&args),
        Command::Matrix(args) => run_matrix_cmd(&args),
        Command::Report(args) => report(&args),
        Command::Oracle(args) => oracle(&args),
    }
}

fn table_build(out: &Path, trials: u64, seed: u64) -> Result<()> {
    eprintln!("building base-case table ({trials} trials/cell)...");
    let started = std::time::Instant::now();
    let (table, report) = BaseCaseTable::build(TableGrids::default_grids(), trials, seed)?;
    table.save(out)?;
    eprintln!(
        "wrote {} ({} cells, {:.1?}, isotonic max correction {:.4} over {} passes)",
        out.display(),
        table.values().len(),
        started.elapsed(),
        report.max_correction,
        report.passes,
    );
    Ok(())
}

fn load_or_build_table(path: &Option<PathBuf>) -> Result<Arc<BaseCaseTable>> {
    match path {
        Some(p) => Ok(Arc::new(BaseCaseTable::load(p)?)),
        None => {
            eprintln!("no --table given; building the default table (100000 trials/cell)...");
            Ok(Arc::new(
                BaseCaseTable::build(TableGrids::default_grids(), 100_000, 32)?.0,
            ))
        }
    }
}

fn load_scenario(path: &Option<PathBuf>) -> Result<ScenarioConfig> {
    match path {
        Some(p) => ScenarioConfig::load(p),
        None => Ok(ScenarioConfig::default()),
    }
}

fn run_scenario(args: &RunArgs) -> Result<()> {
    let scenario = load_scenario(&args.config)?;
    std::fs::create_dir_all(&args.out)?;
    let seeds: Vec<u64> = match args.seed {
        Some(s) => vec![s],
        None => scenario.seeds.clone(),
    };

    let advisor_parts = if scenario.mode == Mode::Advised {
        let table = load_or_build_table(&args.table)?;
        let params = match &args.params {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                Some(Arc::new(serde_json::from_str::<SegmentParamsTable>(&text)?))
            }
            None => {
                if !scenario.online_estimation {
                    eprintln!(
                        "note: no --params file; falling back to online estimation from this run's detectors"
                    );
                }
                None
            }
        };
        Some((scenario.advisory_config()?, table, params))
    } else {
        None
    };

    for &seed in &seeds {
        let setup = advisor_parts
            .as_ref()
            .map(|(config, table, params)| AdvisorSetup {
                config: *config,
                table: table.clone(),
                params: match params {
                    Some(p) => ParamsMode::Offline(p.clone()),
                    None => ParamsMode::Online,
                },
            });
        let output = Simulation::new(scenario.to_sim_config(), setup, seed)?.run()?;

        let dir = args.out.join(format!("seed{seed}"));
        std::fs::create_dir_all(&dir)?;
        let measured = scenario.road.offramp_travel_length;
        events::write_retired_csv(&dir.join("retired.csv"), &output.retired, measured)?;
        events::write_detectors_csv(&dir.join("detectors.csv"), &output.detectors)?;
        events::write_lane_changes_csv(&dir.join("lane_changes.csv"), &output.lane_changes)?;
        events::write_advisories_csv(&dir.join("advisories.csv"), &output.advisories)?;

        let smart_ids: HashSet<u64> = output.smart_ids.iter().copied().collect();
        let positions =
            last_arrival_positions(&output.lane_changes, &smart_ids, scenario.road.lane_count);
        let hist = last_lane_change_histogram(&positions, HISTOGRAM_BINS, HISTOGRAM_RANGE);
        write_histogram_csv(&dir.join("last_lane_change_histogram.csv"), &hist)?;

        let summary = experiment::summarize_run(
            scenario.flow_veh_hr,
            scenario.smart_pct,
            scenario.p_l,
            &output,
            &scenario,
        );
        eprintln!(
            "seed {seed}: spawned {} retired {} missed {} queue-peak {} -> {}",
            output.spawned,
            output.retired.len(),
            output.missed_exits,
            output.queue_peak,
            dir.display()
        );
        if let Some(stats) = summary.all_stats {
            eprintln!(
                "  all vehicles: avg {:.2} s, std {:.2} s, max {:.2} s (n = {})",
                stats.avg, stats.std, stats.max, stats.count
            );
        }
        if let Some(stats) = summary.smart_stats {
            eprintln!(
                "  smart cars:   avg {:.2} s, std {:.2} s, max {:.2} s (n = {})",
                stats.avg, stats.std, stats.max, stats.count
            );
        }
    }
    Ok(())
}

fn run_matrix_cmd(args: &MatrixArgs) -> Result<()> {
    let scenario = load_scenario(&args.config)?;
    let spec: MatrixSpec = match &args.axes {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str(&text)?
        }
        None => MatrixSpec::default(),
    };
    let table = load_or_build_table(&args.table)?;
    std::fs::create_dir_all(&args.out)?;

    let plan = experiment::expand_plan(&spec);
    eprintln!("running {} seeded simulations...", plan.len());
    let started = std::time::Instant::now();
    let results = experiment::run_matrix(&scenario, &spec, table, args.jobs)?;
    eprintln!("matrix finished in {:.1?}", started.elapsed());

    let results_path = args.out.join("results.json");
    results.save(&results_path)?;
    eprintln!("wrote {}", results_path.display());
    write_report_files(&results, &args.out)
}

fn report(args: &ReportArgs) -> Result<()> {
    let results = MatrixResults::load(&args.results)?;
    std::fs::create_dir_all(&args.out)?;
    write_report_files(&results, &args.out)
}

fn write_report_files(results: &MatrixResults, out: &Path) -> Result<()> {
    let rows = experiment::results_table(results)?;
    experiment::write_results_csv(&out.join("results_table.csv"), &rows)?;
    let text = experiment::render_text_table(&rows);
    std::fs::write(out.join("results_table.txt"), &text)?;
    print!("{text}");

    // one histogram per advised configuration, seeds pooled
    let mut configs: Vec<(f64, f64, Option<f64>)> = results
        .runs
        .iter()
        .map(|r| (r.flow, r.smart_pct, r.p_l))
        .collect();
    configs.sort_by(|a, b| {
        a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(
            a.2.unwrap_or(f64::NEG_INFINITY)
                .total_cmp(&b.2.unwrap_or(f64::NEG_INFINITY)),
        )
    });
    configs.dedup_by(|a, b| a == b);
    for (flow, pct, p_l) in configs {
        let positions: Vec<f64> = results
            .runs
            .iter()
            .filter(|r| r.flow == flow && r.smart_pct == pct && r.p_l == p_l)
            .flat_map(|r| r.last_change_positions.iter().copied())
            .collect();
        let hist = last_lane_change_histogram(&positions, HISTOGRAM_BINS, HISTOGRAM_RANGE);
        let name = match p_l {
            None => format!("hist_q{flow}_r{pct}_baseline.csv"),
            Some(p) => format!("hist_q{flow}_r{pct}_pl{p}.csv"),
        };
        write_histogram_csv(&out.join(name), &hist)?;
    }
    Ok(())
}

/// Randomized model-vs-simulation comparison: n2 single-change queries and
/// n3 two-change queries inside the table's normalized range.
fn oracle(args: &OracleArgs) -> Result<()> {
    let table = load_or_build_table(&args.table)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut worst: f64 = 0.0;
    let mut failures = 0usize;

    println!("kind,d_m,v1_ms,model,monte_carlo,abs_err");
    for kind in 0..2 {
        let (count, lanes_needed) = if kind == 0 { (args.n2, 1) } else { (args.n3, 2) };
        for _ in 0..count {
            let query = random_query(&mut rng, lanes_needed);
            let model = reach_probability(&query, &table);
            let mc = chained_monte_carlo(&query, args.trials, &mut rng);
            let err = (model - mc).abs();
            worst = worst.max(err);
            if err > args.tolerance {
                failures += 1;
            }
            println!(
                "n{},{:.1},{:.2},{:.6},{:.6},{:.6}",
                lanes_needed + 1,
                query.d,
                query.v1,
                model,
                mc,
                err
            );
        }
    }
    eprintln!(
        "worst |model - monte carlo| = {worst:.4} over {} queries (tolerance {})",
        args.n2 + args.n3,
        args.tolerance
    );
    if failures > 0 {
        return Err(Error::Config(format!(
            "{failures} queries exceeded the {} tolerance",
            args.tolerance
        )));
    }
    Ok(())
}

/// A random physically plausible query whose normalized coordinates stay
/// inside the default grids.
fn random_query<R: Rng>(rng: &mut R, lanes: usize) -> GoalQuery {
    let v1 = rng.gen_range(20.0..33.0);
    let mu = rng.gen_range(3.0..3.9);
    let sigma = rng.gen_range(0.15..1.0);
    let median: f64 = mu;
    let median = median.exp();
    let g = rng.gen_range(0.2..1.9) * median;
    let mut prev = v1;
    let lanes: Vec<LaneParams> = (0..lanes)
        .map(|_| {
            let sign: f64 = if rng.gen_bool(0.7) { 1.0 } else { -1.0 };
            let v: f64 = (prev + sign * rng.gen_range(4.0..8.0)).max(5.0);
            prev = v;
            LaneParams {
                v,
                headway: LogNormalHeadway::new(mu, sigma),
                g,
                t: 3.0,
            }
        })
        .collect();
    // keep the swept distance within the grid: d_hat <= 60
    let max_dv = lanes
        .iter()
        .scan(v1, |p, l| {
            let dv = (l.v - *p).abs();
            *p = l.v;
            Some(dv)
        })
        .fold(0.0, f64::max);
    let d_cap = 60.0 * median * v1 / max_dv.max(0.1);
    // log-uniform distances spread the queries across the whole probability
    // range instead of piling up near certainty
    let lo = 60.0_f64.ln();
    let hi = 3000.0_f64.ln();
    let d = (lo + rng.gen::<f64>() * (hi - lo)).exp().min(d_cap);
    GoalQuery { d, v1, lanes }
}
