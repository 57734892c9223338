//! Seeded fan-out of independent runs and the concentration statistics
//! computed from their traces.
//!
//! Standard errors use batch means: each run contributes one residual
//! `observed - predicted`, so dependence between decisions inside a run never
//! understates the error.

use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::rng::batch_seed;
use crate::trace::{RunTrace, TraceRow};

/// Runs `f(index, seed)` for `count` runs with seeds derived from `master`.
pub fn run_seeds<T, F>(execution: Execution, master: u64, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, u64) -> T + Sync + Send,
{
    execution.map(count, |i| f(i, batch_seed(master, i as u64)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    TwoSided,
    /// Only an observed excess over the prediction counts against it.
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub observed: f64,
    pub predicted: f64,
    /// Standard error of `observed`.
    pub se: f64,
    /// `(observed - predicted) / se`.
    pub z: f64,
    pub runs: usize,
    pub trials: f64,
    pub within_3se: bool,
}

/// Batch-means estimate from per-run `(observed count, predicted count, trials)`.
pub fn estimate(per_run: &[(f64, f64, f64)], side: Side) -> Estimate {
    let runs = per_run.iter().filter(|r| r.2 > 0.0).count();
    let trials: f64 = per_run.iter().map(|r| r.2).sum();
    let obs: f64 = per_run.iter().map(|r| r.0).sum();
    let pred: f64 = per_run.iter().map(|r| r.1).sum();
    let residuals: Vec<f64> = per_run.iter().filter(|r| r.2 > 0.0).map(|r| r.0 - r.1).collect();
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let var = residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se_r = (var / n).sqrt();
    let scale = trials / n;
    let z = if se_r > 0.0 {
        mean / se_r
    } else if mean.abs() < 1e-12 {
        0.0
    } else {
        mean.signum() * f64::INFINITY
    };
    let within = runs >= 2
        && match side {
            Side::TwoSided => z.abs() <= 3.0,
            Side::Upper => z <= 3.0,
        };
    Estimate {
        observed: obs / trials,
        predicted: pred / trials,
        se: se_r / scale,
        z,
        runs,
        trials,
        within_3se: within,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concentration {
    /// Frequency of "L(e) loses c at v" against `1 - Keep_i`.
    pub loss: Estimate,
    /// Frequency of "c stays in L(e)" against `Keep_i^2`.
    pub retention: Estimate,
    /// Mean `|T′|` against the tracker bound (upper-sided).
    pub t_prime: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationConcentration {
    pub i: usize,
    pub stats: Concentration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub runs: usize,
    pub overall: Concentration,
    pub per_iteration: Vec<IterationConcentration>,
    /// Names of metrics outside 3 standard errors of their prediction.
    pub flagged: Vec<String>,
}

fn concentration<'a, I>(runs: I) -> Concentration
where
    I: Iterator<Item = Vec<&'a TraceRow>> + Clone,
{
    let loss: Vec<_> = runs
        .clone()
        .map(|rows| {
            rows.iter().fold((0.0, 0.0, 0.0), |acc, r| {
                (
                    acc.0 + r.loss_events as f64,
                    acc.1 + (1.0 - r.keep) * r.loss_trials as f64,
                    acc.2 + r.loss_trials as f64,
                )
            })
        })
        .collect();
    let retention: Vec<_> = runs
        .clone()
        .map(|rows| {
            rows.iter().fold((0.0, 0.0, 0.0), |acc, r| {
                (
                    acc.0 + r.retention_kept as f64,
                    acc.1 + r.keep * r.keep * r.retention_trials as f64,
                    acc.2 + r.retention_trials as f64,
                )
            })
        })
        .collect();
    let t_prime: Vec<_> = runs
        .map(|rows| {
            rows.iter().fold((0.0, 0.0, 0.0), |acc, r| {
                (
                    acc.0 + r.t_prime_sum as f64,
                    acc.1 + r.t_prime_bound_sum,
                    acc.2 + r.t_prime_trackers as f64,
                )
            })
        })
        .collect();
    Concentration {
        loss: estimate(&loss, Side::TwoSided),
        retention: estimate(&retention, Side::TwoSided),
        t_prime: estimate(&t_prime, Side::Upper),
    }
}

pub fn concentration_report(traces: &[RunTrace]) -> ConcentrationReport {
    let overall = concentration(traces.iter().map(|t| t.rows.iter().collect()));
    let max_i = traces.iter().flat_map(|t| t.rows.iter().map(|r| r.i)).max();
    let per_iteration: Vec<IterationConcentration> = match max_i {
        None => Vec::new(),
        Some(max_i) => (0..=max_i)
            .map(|i| IterationConcentration {
                i,
                stats: concentration(traces.iter().map(move |t| t.rows.iter().filter(|r| r.i == i).collect())),
            })
            .collect(),
    };
    let mut flagged = Vec::new();
    let mut flag = |name: String, c: &Concentration| {
        for (metric, e) in [("loss", &c.loss), ("retention", &c.retention), ("t_prime", &c.t_prime)] {
            if e.runs >= 2 && !e.within_3se {
                flagged.push(format!("{name}.{metric}"));
            }
        }
    };
    flag("overall".into(), &overall);
    for it in &per_iteration {
        flag(format!("iteration_{}", it.i), &it.stats);
    }
    ConcentrationReport {
        runs: traces.len(),
        overall,
        per_iteration,
        flagged,
    }
}
