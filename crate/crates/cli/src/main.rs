use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use dpnibble::batch::{concentration_report, run_seeds};
use dpnibble::correspondence::{identity_correspondence, random_correspondence, shift_correspondence};
use dpnibble::exec::Execution;
use dpnibble::finisher::write_resample_log;
use dpnibble::graph::{gen_complete, gen_cycle, gen_path, gen_random_max_degree, gen_star, SimpleGraph};
use dpnibble::instance::{load_colouring, pretty, save_colouring, write, Instance};
use dpnibble::nibble::{EngineConfig, Nibble};
use dpnibble::oracle::{oracle_colourable_with, oracle_min_q, Guard};
use dpnibble::params::{crossover_analysis, default_crossover_grid, EngineeringOptions, ParamTrajectory, TrajectoryConfig};
use dpnibble::pipeline::{run_pipeline, schedule_for, PipelineConfig, ScheduleChoice, Status};
use dpnibble::trace::{load_rows, RunTrace};
use dpnibble::validate::validate_colouring;

/// Correspondence edge colouring by the nibble method.
#[derive(Parser)]
#[command(name = "dpnibble", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a graph and correspondence and write them as an instance file.
    Gen(GenArgs),
    /// Run nibble, finisher and validator on an instance.
    Color(ColorArgs),
    /// Compute parameter trajectories or crossover sweeps.
    Simulate(SimulateArgs),
    /// Decide colourability exactly (tiny instances).
    Oracle(OracleArgs),
    /// Check a colouring file against an instance.
    Validate(ValidateArgs),
    /// Concentration report from traces or from fresh seeded runs.
    Stats(StatsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphKind {
    Cycle,
    Path,
    Complete,
    Star,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum CorrKind {
    Identity,
    Shift,
    Random,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    graph: GraphKind,
    /// Vertex count (leaf count for stars).
    #[arg(long)]
    n: u32,
    /// Degree cap for random graphs.
    #[arg(long, default_value_t = 3)]
    max_degree: usize,
    #[arg(long, value_enum, default_value = "identity")]
    corr: CorrKind,
    /// Palette size; defaults to ceil(1.2 Δ).
    #[arg(long)]
    q: Option<u32>,
    /// Matching size as a fraction of q (random correspondences).
    #[arg(long, default_value_t = 1.0)]
    density: f64,
    /// Number of shifted pairs, taken as (i, i+1) from edge 0 (shift correspondences).
    #[arg(long, default_value_t = 1)]
    shifts: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct EngineArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// ε of the faithful schedule; defaults to q/Δ - 1.
    #[arg(long)]
    eps: Option<f64>,
    /// Overrides max(ln Δ, 2) in the engine.
    #[arg(long)]
    ln_factor: Option<f64>,
    #[arg(long, default_value_t = 50)]
    retry_limit: usize,
    /// Defaults to 10^4 · |residual edges|.
    #[arg(long)]
    resample_cap: Option<usize>,
    #[arg(long, default_value_t = 10.0)]
    ratio_threshold: f64,
    /// Desk-scale schedule starting at L_0 = q with binomial slack.
    #[arg(long)]
    engineering_mode: bool,
    /// Slack width (standard deviations) in engineering mode.
    #[arg(long, default_value_t = 4.0)]
    sigmas: f64,
    /// Use this trajectory CSV as the schedule.
    #[arg(long, conflicts_with = "engineering_mode")]
    schedule: Option<PathBuf>,
}

impl EngineArgs {
    fn config(&self, diagnostics: bool) -> Result<PipelineConfig> {
        let schedule = if let Some(path) = &self.schedule {
            ScheduleChoice::Supplied(ParamTrajectory::load_csv(path).map_err(|e| anyhow!("{}: {e}", path.display()))?)
        } else if self.engineering_mode {
            ScheduleChoice::Engineering(EngineeringOptions {
                sigmas: self.sigmas,
                ratio_threshold: self.ratio_threshold,
                ..EngineeringOptions::default()
            })
        } else {
            ScheduleChoice::Faithful {
                eps: self.eps,
                ratio_threshold: self.ratio_threshold,
            }
        };
        Ok(PipelineConfig {
            engine: EngineConfig {
                ln_factor: self.ln_factor,
                retry_limit: self.retry_limit,
                eps: self.eps,
                diagnostics,
                execution: Execution::Sequential,
            },
            schedule,
            resample_cap: self.resample_cap,
            ..PipelineConfig::default()
        })
    }
}

#[derive(Args)]
struct ColorArgs {
    #[arg(long)]
    instance: PathBuf,
    #[command(flatten)]
    engine: EngineArgs,
    /// Colouring file (written on success).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-iteration trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Finisher resample log CSV.
    #[arg(long)]
    resample_log: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 1e6)]
    delta: f64,
    #[arg(long, default_value_t = 2)]
    k: u32,
    #[arg(long, default_value_t = 10.0)]
    ratio_threshold: f64,
    /// Sweep Δ over --grid and report crossover indices instead.
    #[arg(long)]
    crossover: bool,
    /// Comma-separated Δ values for --crossover.
    #[arg(long, value_delimiter = ',')]
    grid: Vec<f64>,
    /// Trajectory CSV (or crossover JSON with --crossover).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Builder {
    Identity,
    Shift,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Scan q = 1..=q_max with this builder on the instance graph instead.
    #[arg(long, value_enum)]
    min_q: Option<Builder>,
    #[arg(long, default_value_t = 8)]
    q_max: u32,
    #[arg(long, default_value_t = 16)]
    max_edges: usize,
    /// Witness colouring file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    colouring: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    /// Trace CSVs to aggregate (their keep columns carry the predictions).
    #[arg(long, num_args = 1..)]
    traces: Vec<PathBuf>,
    /// Instead run this many seeded runs on --instance.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    instance: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineArgs,
    /// Run sequentially even when built with the parallel feature.
    #[arg(long)]
    sequential: bool,
    /// Report JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with a chosen exit code.
struct Exit(u8, anyhow::Error);

fn invalid(e: anyhow::Error) -> Exit {
    Exit(2, e)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a).map_err(invalid),
        Command::Color(a) => color(a),
        Command::Simulate(a) => simulate(a).map_err(invalid),
        Command::Oracle(a) => oracle(a).map_err(invalid),
        Command::Validate(a) => validate(a),
        Command::Stats(a) => stats(a).map_err(invalid),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Exit(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn emit<T: Serialize>(value: &T) {
    print!("{}", pretty(value));
}

fn load(path: &Path) -> Result<Instance> {
    Ok(Instance::load(path)?)
}

fn build_graph(kind: GraphKind, n: u32, max_degree: usize, seed: u64) -> Result<SimpleGraph> {
    Ok(match kind {
        GraphKind::Cycle => gen_cycle(n)?,
        GraphKind::Path => gen_path(n)?,
        GraphKind::Complete => gen_complete(n)?,
        GraphKind::Star => gen_star(n)?,
        GraphKind::Random => gen_random_max_degree(n, max_degree, seed)?,
    })
}

fn gen(a: GenArgs) -> Result<u8> {
    let graph = build_graph(a.graph, a.n, a.max_degree, a.seed)?;
    let q = a.q.unwrap_or_else(|| ((1.2 * graph.max_degree() as f64).ceil() as u32).max(1));
    let correspondence = match a.corr {
        CorrKind::Identity => identity_correspondence(&graph, q)?,
        CorrKind::Random => random_correspondence(&graph, q, a.density, a.seed)?,
        CorrKind::Shift => {
            let m = graph.edge_count() as u32;
            let pairs: Vec<_> = (0..a.shifts.min(m)).map(|i| (i, (i + 1) % m)).collect();
            shift_correspondence(&graph, q, &pairs)?
        }
    };
    let inst = Instance { graph, correspondence };
    inst.save(&a.out)?;
    emit(&json!({
        "instance": a.out.display().to_string(),
        "vertices": inst.graph.vertex_count(),
        "edges": inst.graph.edge_count(),
        "max_degree": inst.graph.max_degree(),
        "q": q,
        "matchings": inst.correspondence.matchings().len(),
    }));
    Ok(0)
}

fn color(a: ColorArgs) -> Result<u8, Exit> {
    let inst = load(&a.instance).map_err(invalid)?;
    let mut cfg = a.engine.config(true).map_err(invalid)?;
    cfg.keep_resample_log = a.resample_log.is_some();
    let report = run_pipeline(&inst.graph, &inst.correspondence, &cfg, a.engine.seed);
    let io = |e: dpnibble::instance::FileError| Exit(2, e.into());
    if let Some(path) = &a.trace {
        report.trace.save_csv(path).map_err(|e| Exit(2, e.into()))?;
    }
    if let Some(path) = &a.resample_log {
        let file = std::fs::File::create(path).map_err(|e| Exit(2, e.into()))?;
        write_resample_log(&report.resample_log, file).map_err(|e| Exit(2, e.into()))?;
    }
    if let (Some(path), Some(c)) = (&a.out, &report.colouring) {
        save_colouring(c, path).map_err(io)?;
    }
    let summary = json!({
        "status": format!("{:?}", report.status),
        "exit_code": report.status.exit_code(),
        "message": report.message,
        "meta": report.trace.meta,
        "iterations": report.trace.rows.len(),
        "stop": report.stop.map(|s| s.to_string()),
        "coloured_by_nibble": report.partial.as_ref().map(|p| p.coloured_count()),
        "residual_edges": report.residual_edges,
        "resamples": report.resamples,
        "colouring": a.out.as_ref().filter(|_| report.colouring.is_some()).map(|p| p.display().to_string()),
    });
    emit(&summary);
    Ok(report.status.exit_code() as u8)
}

fn simulate(a: SimulateArgs) -> Result<u8> {
    if a.crossover {
        let grid = if a.grid.is_empty() { default_crossover_grid() } else { a.grid.clone() };
        let points = crossover_analysis(a.eps, a.k, &grid)?;
        if let Some(path) = &a.out {
            write(path, &pretty(&points))?;
        }
        emit(&points);
        return Ok(0);
    }
    let traj = ParamTrajectory::compute(&TrajectoryConfig::faithful(a.eps, a.delta, a.k, a.ratio_threshold));
    if let Some(path) = &a.out {
        traj.save_csv(path)?;
    }
    let last = traj.rows.last().copied();
    emit(&json!({
        "eps": a.eps,
        "delta": a.delta,
        "k": a.k,
        "rows": traj.rows.len(),
        "halt": traj.halt.to_string(),
        "crossover": traj.crossover,
        "ratio_increasing": traj.rows.windows(2).all(|w| w[1].ratio > w[0].ratio),
        "slack_second_order": traj.slack_second_order(),
        "last": last,
    }));
    Ok(0)
}

fn oracle(a: OracleArgs) -> Result<u8> {
    let inst = load(&a.instance)?;
    let guard = Guard {
        max_edges: a.max_edges,
        ..Guard::default()
    };
    if let Some(builder) = a.min_q {
        let graph = &inst.graph;
        let result = match builder {
            Builder::Identity => oracle_min_q(graph, identity_correspondence, a.q_max)?,
            Builder::Shift => oracle_min_q(graph, |g, q| shift_correspondence(g, q, &[(0, 1)]), a.q_max)?,
        };
        emit(&json!({ "min_q": result }));
        return Ok(0);
    }
    let witness = oracle_colourable_with(&inst.graph, &inst.correspondence, guard)?;
    if let (Some(path), Some(w)) = (&a.out, &witness) {
        save_colouring(w, path)?;
    }
    emit(&json!({
        "decision": if witness.is_some() { "colourable" } else { "uncolourable" },
        "witness": witness.as_ref().map(|w| w.as_slice().to_vec()),
    }));
    Ok(0)
}

fn validate(a: ValidateArgs) -> Result<u8, Exit> {
    let inst = load(&a.instance).map_err(invalid)?;
    let colouring = load_colouring(&a.colouring).map_err(|e| invalid(e.into()))?;
    let report = validate_colouring(&inst.graph, &inst.correspondence, &colouring);
    emit(&json!({
        "valid": report.is_valid(),
        "problems": report.problems.iter().map(|p| p.to_string()).collect::<Vec<_>>(),
    }));
    Ok(if report.is_valid() { 0 } else { Status::ValidationFailed.exit_code() as u8 })
}

fn stats(a: StatsArgs) -> Result<u8> {
    let traces: Vec<RunTrace> = match (a.runs, &a.instance) {
        (Some(runs), Some(path)) => {
            if !a.traces.is_empty() {
                bail!("--traces cannot be combined with --runs");
            }
            let inst = load(path)?;
            let cfg = a.engine.config(true)?;
            let execution = if a.sequential { Execution::Sequential } else { Execution::Parallel };
            // concentration only concerns the engine, so the finisher is skipped
            let nibble = Nibble::new(&inst.graph, &inst.correspondence, cfg.engine)?;
            let schedule = schedule_for(&inst.graph, inst.correspondence.q(), &cfg);
            run_seeds(execution, a.engine.seed, runs, |_, seed| match nibble.run(&schedule, seed) {
                Ok(run) => run.trace,
                Err(failure) => failure.trace,
            })
        }
        (None, None) => {
            if a.traces.is_empty() {
                bail!("give --traces or --runs with --instance");
            }
            a.traces
                .iter()
                .map(|p| {
                    load_rows(p)
                        .with_context(|| p.display().to_string())
                        .map(|rows| RunTrace { rows, ..RunTrace::default() })
                })
                .collect::<Result<_>>()?
        }
        _ => bail!("--runs and --instance go together"),
    };
    let report = concentration_report(&traces);
    if let Some(path) = &a.out {
        write(path, &pretty(&report))?;
    }
    let summary: Value = json!({
        "runs": report.runs,
        "flagged": report.flagged,
        "overall": report.overall,
        "iterations": report.per_iteration.len(),
    });
    emit(&summary);
    Ok(0)
}
