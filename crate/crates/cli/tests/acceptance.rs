//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use dpnibble::batch::{concentration_report, run_seeds, Estimate};
use dpnibble::correspondence::{identity_correspondence, random_correspondence, shift_correspondence};
use dpnibble::exec::Execution;
use dpnibble::finisher::{complete_colouring, constructed_instance};
use dpnibble::graph::{gen_cycle, gen_random_max_degree, SimpleGraph};
use dpnibble::nibble::{default_ln_factor, EngineConfig, Nibble};
use dpnibble::oracle::{oracle_colourable, oracle_min_q};
use dpnibble::params::{analytic_x, trajectory, EngineeringOptions, HaltReason, ParamError, ParamTrajectory, TrajectoryConfig};
use dpnibble::pipeline::{run_pipeline, schedule_for, PipelineConfig, ScheduleChoice};
use dpnibble::rng::keyed_rng;
use dpnibble::trace::RunTrace;
use dpnibble::validate::validate_colouring;
use rand::Rng;

const MASTER: u64 = 0x5eed_2024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 9] = [
        ("validity of every reported success", Duration::from_secs(300), validity),
        ("oracle agreement on graphs with at most 6 edges", Duration::from_secs(120), oracle_agreement),
        ("lower-bound witness on even cycles", Duration::from_secs(60), lower_bound),
        ("trajectory crossover at delta 1e6", Duration::from_secs(1), crossover),
        ("recursion fidelity for k = 2, 3, 4", Duration::from_secs(1), fidelity),
        ("equalizing-flip exactness", Duration::from_secs(300), flips),
        ("T' diagnostics below the bound", Duration::from_secs(300), t_prime),
        ("finisher termination on L >= 8T instances", Duration::from_secs(180), finisher),
        ("CLI determinism", Duration::from_secs(300), determinism),
    ];
    // `cargo test --test acceptance -- 2 5` runs only the listed criteria
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (n, (name, budget, check)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(n + 1)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let pass = result.pass && took <= *budget;
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {}: {name}: {} [{:.2}s of {}s]",
            if pass { "PASS" } else { "FAIL" },
            n + 1,
            result.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- criterion 1

fn validity() -> Outcome {
    const RUNS: usize = 1000;
    let results = run_seeds(Execution::Parallel, MASTER, RUNS, |i, seed| {
        let mut rng = keyed_rng([seed, 1, 0, 0]);
        let (graph, corr) = match i % 3 {
            0 => {
                let g = random_graph(&mut rng, seed);
                let q = q_for(&g);
                let c = identity_correspondence(&g, q).unwrap();
                (g, c)
            }
            1 => {
                let g = gen_cycle(rng.random_range(3..=200)).unwrap();
                let m = g.edge_count() as u32;
                let shifts: Vec<_> = (0..rng.random_range(1..=m)).map(|j| (j, (j + 1) % m)).collect();
                let c = shift_correspondence(&g, q_for(&g), &shifts).unwrap();
                (g, c)
            }
            _ => {
                let g = random_graph(&mut rng, seed);
                let density = [0.25, 0.5, 0.75, 1.0][rng.random_range(0..4)];
                let c = random_correspondence(&g, q_for(&g), density, seed).unwrap();
                (g, c)
            }
        };
        let schedule = if i % 2 == 0 {
            ScheduleChoice::default()
        } else {
            ScheduleChoice::Engineering(EngineeringOptions::default())
        };
        let cfg = PipelineConfig {
            engine: EngineConfig {
                diagnostics: false,
                ..EngineConfig::default()
            },
            schedule,
            resample_cap: Some(50 * graph.edge_count().max(1)),
            ..PipelineConfig::default()
        };
        let report = run_pipeline(&graph, &corr, &cfg, seed);
        let valid = report
            .colouring
            .as_ref()
            .is_none_or(|c| validate_colouring(&graph, &corr, c).is_valid());
        (report.status.is_success(), report.colouring.is_some(), valid, graph.max_degree())
    });
    let successes = results.iter().filter(|r| r.0).count();
    let invalid = results.iter().filter(|r| !r.2 || r.0 != r.1).count();
    let max_delta = results.iter().map(|r| r.3).max().unwrap_or(0);
    outcome(
        invalid == 0 && max_delta <= 20,
        format!("{RUNS} runs, {successes} successes, {invalid} invalid, max degree {max_delta}"),
    )
}

fn random_graph(rng: &mut impl Rng, seed: u64) -> SimpleGraph {
    let n = rng.random_range(10..=200);
    let d = rng.random_range(2..=20);
    gen_random_max_degree(n, d, seed).unwrap()
}

fn q_for(g: &SimpleGraph) -> u32 {
    ((1.2 * g.max_degree() as f64).ceil() as u32).max(1)
}

// ---------------------------------------------------------------- criterion 2

/// Every graph with 1..=6 edges and no isolated vertices, one per isomorphism class.
fn small_graphs() -> Vec<Vec<(u32, u32)>> {
    let mut all = Vec::new();
    let mut layer: BTreeSet<Vec<(u32, u32)>> = BTreeSet::from([vec![(0, 1)]]);
    for size in 1..=6 {
        all.extend(layer.iter().cloned());
        if size == 6 {
            break;
        }
        let mut next = BTreeSet::new();
        for g in &layer {
            let n = g.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap();
            for a in 0..n + 2 {
                for b in a + 1..n + 2 {
                    // a fresh vertex must be numbered n, and a second fresh one n + 1
                    if (b == n + 1 && a < n) || g.contains(&(a, b)) {
                        continue;
                    }
                    let mut h = g.clone();
                    h.push((a, b));
                    next.insert(canonical(&h));
                }
            }
        }
        layer = next;
    }
    all
}

/// Lexicographically least relabelling over all edge orders, with vertices
/// numbered by first appearance. Equal for isomorphic graphs without isolated vertices.
fn canonical(edges: &[(u32, u32)]) -> Vec<(u32, u32)> {
    let mut order: Vec<usize> = (0..edges.len()).collect();
    let mut best: Option<Vec<(u32, u32)>> = None;
    permute(&mut order, 0, &mut |perm| {
        for flips in 0..1u32 << edges.len() {
            // at most 12 vertices; u32::MAX marks "not yet labelled"
            let mut label = [u32::MAX; 12];
            let mut next = 0;
            let mut out = Vec::with_capacity(edges.len());
            for (k, &e) in perm.iter().enumerate() {
                let (mut a, mut b) = edges[e];
                if flips >> k & 1 == 1 {
                    std::mem::swap(&mut a, &mut b);
                }
                for v in [a, b] {
                    if label[v as usize] == u32::MAX {
                        label[v as usize] = next;
                        next += 1;
                    }
                }
                let (la, lb) = (label[a as usize], label[b as usize]);
                out.push((la.min(lb), la.max(lb)));
            }
            if best.as_ref().is_none_or(|b| out < *b) {
                best = Some(out);
            }
        }
    });
    let mut best = best.unwrap();
    best.sort();
    best
}

fn permute(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, f);
        v.swap(k, i);
    }
}

fn oracle_agreement() -> Outcome {
    let graphs = small_graphs();
    let mut by_size = [0usize; 7];
    for g in &graphs {
        by_size[g.len()] += 1;
    }
    let expected_classes = [0, 1, 2, 5, 11, 26, 68];
    let cases: Vec<(usize, u32, usize)> = (0..graphs.len())
        .flat_map(|g| (1..=4).flat_map(move |q| (0..200).map(move |r| (g, q, r))))
        .collect();
    let results = run_seeds(Execution::Parallel, MASTER ^ 2, cases.len(), |i, seed| {
        let (gi, q, r) = cases[i];
        let edges = &graphs[gi];
        let n = edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap();
        let graph = SimpleGraph::new(n, edges).unwrap();
        let density = [0.25, 0.5, 0.75, 1.0][r % 4];
        let corr = random_correspondence(&graph, q, density, seed).unwrap();
        let colourable = oracle_colourable(&graph, &corr).unwrap().is_some();
        let cfg = PipelineConfig {
            engine: EngineConfig {
                diagnostics: false,
                ..EngineConfig::default()
            },
            resample_cap: Some(100 * graph.edge_count()),
            ..PipelineConfig::default()
        };
        let report = run_pipeline(&graph, &corr, &cfg, seed);
        let valid = report
            .colouring
            .as_ref()
            .is_none_or(|c| validate_colouring(&graph, &corr, c).is_valid());
        (colourable, report.status.is_success(), valid)
    });
    let disagreements = results.iter().filter(|&&(col, ok, valid)| (ok && !col) || !valid).count();
    let uncolourable = results.iter().filter(|r| !r.0).count();
    let successes = results.iter().filter(|r| r.1).count();
    let classes_ok = by_size == expected_classes;
    outcome(
        classes_ok && disagreements == 0,
        format!(
            "{} graphs (per size {:?}), {} cases, {} uncolourable, {} pipeline successes, {} disagreements",
            graphs.len(),
            &by_size[1..],
            results.len(),
            uncolourable,
            successes,
            disagreements
        ),
    )
}

// ---------------------------------------------------------------- criterion 3

fn lower_bound() -> Outcome {
    let mut found = Vec::new();
    let mut pass = true;
    for m in 2..=6u32 {
        let g = gen_cycle(2 * m).unwrap();
        let shift = oracle_min_q(&g, |g, q| shift_correspondence(g, q, &[(0, 1)]), 8).unwrap();
        let ident = oracle_min_q(&g, identity_correspondence, 8).unwrap();
        pass &= shift == Some(3) && ident == Some(2);
        found.push(format!("C{}: shift {:?} identity {:?}", 2 * m, shift, ident));
    }
    outcome(pass, found.join(", "))
}

// ---------------------------------------------------------------- criterion 4

fn crossover() -> Outcome {
    let delta = 1e6f64;
    let mut pass = true;
    let mut notes = Vec::new();
    for eps in [0.05, 0.1, 0.2] {
        let (traj, progress) = match trajectory(eps, delta, 2, 10.0) {
            Ok(t) => (t, "ok".to_string()),
            Err(ParamError::NoProgress { row, before, after, .. }) => (
                ParamTrajectory::compute(&TrajectoryConfig::faithful(eps, delta, 2, 10.0)),
                format!("ratio fell at row {row} ({before:.4} -> {after:.4})"),
            ),
            Err(e) => return outcome(false, e.to_string()),
        };
        let (ok, note) = trajectory_checks(&traj, eps, delta);
        pass &= ok;
        notes.push(format!("eps {eps}: {note}; {progress}"));
    }
    outcome(pass, notes.join(" | "))
}

/// Halting, floor, monotone ratio with the required growth, and crossover bound.
fn trajectory_checks(traj: &ParamTrajectory, eps: f64, delta: f64) -> (bool, String) {
    let last = traj.rows.last().unwrap();
    let floor = delta.powf(0.9);
    let halted = matches!(traj.halt, HaltReason::RatioExceeded(_));
    let above = last.l > floor && last.t > floor;
    let growth = 1.0 + eps / (4.0 * delta.ln()) - 1e-12;
    let increasing = traj.rows.windows(2).all(|w| w[1].ratio > w[0].ratio);
    let grows = traj.rows.windows(2).all(|w| w[1].ratio / w[0].ratio >= growth);
    let x = analytic_x(eps, 10.0);
    let bounded = traj.crossover.is_some_and(|i| i as f64 <= x * delta.ln());
    let ok = halted && above && increasing && grows && bounded;
    (
        ok,
        format!(
            "halt {} after {} rows, crossover {:?} (bound {:.1}), increasing {increasing}, growth {grows}",
            traj.halt,
            traj.rows.len(),
            traj.crossover,
            x * delta.ln()
        ),
    )
}

// ---------------------------------------------------------------- criterion 5

fn fidelity() -> Outcome {
    let mut worst = 0.0f64;
    let mut rows = 0;
    for k in [2u32, 3, 4] {
        let threshold = if k == 2 { 10.0 } else { 5.0 * k as f64 };
        for eps in [0.05, 0.1, 0.2] {
            for delta in [1e6, 1e9, 1e30, 1e100] {
                let traj = ParamTrajectory::compute(&TrajectoryConfig::faithful(eps, delta, k, threshold));
                worst = worst.max(recompute_error(&traj, eps, delta, k));
                rows += traj.rows.len();
            }
        }
    }
    outcome(worst <= 1e-12, format!("{rows} rows, worst relative error {worst:.3e}"))
}

/// Largest relative deviation of emitted rows from the recursion evaluated here.
fn recompute_error(traj: &ParamTrajectory, eps: f64, delta: f64, k: u32) -> f64 {
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    let ln = delta.ln();
    let slack = delta.powf(2.0 / 3.0);
    let first = traj.rows[0];
    let mut worst = rel(first.l, (1.0 + eps) * delta).max(rel(first.t, delta));
    for (n, row) in traj.rows.iter().enumerate() {
        let keep = (row.t * (-1.0 / (row.l * ln)).ln_1p()).exp();
        worst = worst.max(rel(row.keep, keep)).max(rel(row.ratio, row.l / row.t));
        if let Some(next) = traj.rows.get(n + 1) {
            let kk = keep.powf(k as f64);
            let l = row.l * kk - slack;
            let t = row.t * (1.0 - (1.0 - eps / 2.0) * kk / ln) * keep.powf(k as f64 - 1.0) + slack;
            worst = worst.max(rel(next.l, l)).max(rel(next.t, t));
        }
    }
    worst
}

// ---------------------------------------------------------- criteria 6 and 7

const DESK_RUNS: usize = 60;
const DESK_DELTA: usize = 20;
const DESK_Q: u32 = 24;
const DESK_EPS: f64 = 0.2;

/// Instrumented engineering runs at Δ = 20, q = 24, each on its own instance.
/// The flag records whether the run ended without exhausting its retries.
fn desk_traces() -> Vec<(RunTrace, bool)> {
    run_seeds(Execution::Parallel, MASTER ^ 6, DESK_RUNS, |_, seed| {
        let graph = gen_random_max_degree(200, DESK_DELTA, seed).unwrap();
        let corr = random_correspondence(&graph, DESK_Q, 1.0, seed).unwrap();
        let cfg = PipelineConfig {
            schedule: ScheduleChoice::Engineering(EngineeringOptions::default()),
            ..PipelineConfig::default()
        };
        let nibble = Nibble::new(&graph, &corr, cfg.engine).unwrap();
        let schedule = schedule_for(&graph, DESK_Q, &cfg);
        match nibble.run(&schedule, seed) {
            Ok(run) => (run.trace, true),
            Err(failure) => (failure.trace, false),
        }
    })
}

fn describe(name: &str, e: &Estimate) -> String {
    format!(
        "{name} {:.5} vs {:.5} (z {:.2}, {} trials)",
        e.observed, e.predicted, e.z, e.trials as u64
    )
}

fn flips() -> Outcome {
    let traces: Vec<RunTrace> = desk_traces().into_iter().map(|t| t.0).collect();
    let report = concentration_report(&traces);
    let (loss, kept) = (&report.overall.loss, &report.overall.retention);
    outcome(
        loss.trials >= 1e4 && kept.trials >= 1e4 && loss.within_3se && kept.within_3se,
        format!("{} runs: {}; {}", report.runs, describe("loss", loss), describe("retention", kept)),
    )
}

fn t_prime() -> Outcome {
    let held: Vec<RunTrace> = desk_traces().into_iter().filter(|t| t.1).map(|t| t.0).collect();
    let report = concentration_report(&held);
    let tp = &report.overall.t_prime;
    // the bound is only meaningful while its leading factor is positive
    let ln = default_ln_factor(DESK_DELTA);
    let precondition = held.iter().flat_map(|t| &t.rows).all(|r| r.keep * r.keep / ln < DESK_EPS);
    outcome(
        !held.is_empty() && precondition && tp.within_3se,
        format!("{} runs with property (1): {}", held.len(), describe("mean |T'|", tp)),
    )
}

// ---------------------------------------------------------------- criterion 8

fn finisher() -> Outcome {
    const INSTANCES: usize = 500;
    let results = run_seeds(Execution::Parallel, MASTER ^ 8, INSTANCES, |i, seed| {
        let l = 16 + (i as u32 * 7) % 113;
        let n = 20 + (i as u32 * 13) % 61;
        let (graph, corr, residual) = constructed_instance(l, n, seed);
        let ok_shape = residual.l_min() >= 8 * residual.t_max() && (16..=128).contains(&residual.l_min());
        let mut rng = keyed_rng([seed, 8, 0, 0]);
        match complete_colouring(&residual, &mut rng, 100 * residual.edges().len(), false) {
            Ok(done) => (ok_shape, true, validate_colouring(&graph, &corr, &done.colouring).is_valid()),
            Err(_) => (ok_shape, false, true),
        }
    });
    let shaped = results.iter().all(|r| r.0);
    let successes = results.iter().filter(|r| r.1).count();
    let invalid = results.iter().filter(|r| !r.2).count();
    outcome(
        shaped && successes * 100 >= 99 * INSTANCES && invalid == 0,
        format!("{successes}/{INSTANCES} completed within 100|E| resamples, {invalid} invalid, hypothesis holds on all: {shaped}"),
    )
}

// ---------------------------------------------------------------- criterion 9

/// Invocations run in a scratch directory; every path is relative.
const INVOCATIONS: &[&[&str]] = &[
    &["gen", "--graph", "random", "--n", "120", "--max-degree", "12", "--corr", "random", "--seed", "3", "--out", "rand.json"],
    &["gen", "--graph", "cycle", "--n", "8", "--corr", "shift", "--q", "2", "--out", "cycle.json"],
    &["gen", "--graph", "path", "--n", "3", "--q", "2", "--out", "p3.json"],
    &["color", "--instance", "rand.json", "--seed", "9", "--out", "rand.col.json", "--trace", "rand.trace.csv", "--resample-log", "rand.log.csv"],
    &["color", "--instance", "rand.json", "--seed", "9", "--engineering-mode", "--trace", "rand.eng.csv"],
    &["color", "--instance", "p3.json", "--seed", "5", "--out", "p3.col.json", "--resample-log", "p3.log.csv"],
    &["validate", "--instance", "p3.json", "--colouring", "p3.col.json"],
    &["oracle", "--instance", "cycle.json", "--out", "cycle.witness.json"],
    &["oracle", "--instance", "cycle.json", "--min-q", "shift"],
    &["simulate", "--eps", "0.1", "--out", "traj.csv"],
    &["simulate", "--eps", "0.05", "--crossover", "--grid", "1e4,1e6", "--out", "cross.json"],
    &["stats", "--instance", "rand.json", "--runs", "8", "--engineering-mode", "--seed", "4", "--out", "stats.json"],
    &["stats", "--traces", "rand.trace.csv", "rand.eng.csv"],
];

/// Runs every invocation in `dir` and returns (invocation, exit code, stdout) plus all files written.
fn run_all(dir: &Path) -> (Vec<(String, Option<i32>, Vec<u8>)>, Vec<(String, Vec<u8>)>) {
    let exe = env!("CARGO_BIN_EXE_dpnibble");
    let outputs = INVOCATIONS
        .iter()
        .map(|args| {
            let out = Command::new(exe).args(*args).current_dir(dir).output().expect("spawn dpnibble");
            (args.join(" "), out.status.code(), out.stdout)
        })
        .collect();
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    (outputs, files)
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (out_a, files_a) = run_all(a.path());
    let (out_b, files_b) = run_all(b.path());
    let crashed: Vec<&str> = out_a
        .iter()
        .filter(|o| !matches!(o.1, Some(0..=5)))
        .map(|o| o.0.as_str())
        .collect();
    let differing: Vec<String> = out_a
        .iter()
        .zip(&out_b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| format!("stdout of `{}`", x.0))
        .chain(
            files_a
                .iter()
                .zip(&files_b)
                .filter(|(x, y)| x != y)
                .map(|(x, _)| format!("file {}", x.0)),
        )
        .collect();
    let same_files = files_a.len() == files_b.len();
    outcome(
        crashed.is_empty() && differing.is_empty() && same_files,
        format!(
            "{} invocations, {} files compared, differing {:?}, unexpected exits {:?}",
            out_a.len(),
            files_a.len(),
            differing,
            crashed
        ),
    )
}
