//! Deterministic parameter trajectories `L_i, T_i, Keep_i`.
//!
//! For k-uniform linear hypergraphs (k = 2 for graphs):
//!
//! ```text
//! Keep_i  = (1 - 1/(L_i ln Δ))^{T_i}
//! L_{i+1} = L_i Keep_i^k - Δ^{2/3}
//! T_{i+1} = T_i (1 - (1 - ε/2) Keep_i^k / ln Δ) Keep_i^{k-1} + Δ^{2/3}
//! ```
//!
//! starting from `L_0 = (1+ε)Δ`, `T_0 = Δ`, and stopping at the first row with
//! `L_i < Δ^{9/10}`, `T_i < Δ^{9/10}` or `L_i > threshold · T_i`.
//!
//! The same machinery drives the desk-scale "engineering" schedules, where the
//! `Δ^{2/3}` slack is replaced by a multiple of the binomial standard deviation
//! and `ln Δ` by the engine's log factor.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("ratio L/T stopped increasing at row {row} ({before} -> {after})")]
    NoProgress {
        row: usize,
        before: f64,
        after: f64,
        partial: Box<ParamTrajectory>,
    },
    #[error("trajectory CSV: {0}")]
    Csv(String),
}

/// `(1 - 1/(L ln Δ))^T`.
pub fn keep_value(l: f64, t: f64, delta: f64) -> Result<f64, ParamError> {
    keep_with_log(l, t, delta.ln())
}

/// `(1 - 1/(L · log_factor))^T`, evaluated as `exp(T · log1p(-1/(L · log_factor)))`.
pub fn keep_with_log(l: f64, t: f64, log_factor: f64) -> Result<f64, ParamError> {
    let denom = l * log_factor;
    if !(denom > 1.0) || !(t >= 0.0) || !denom.is_finite() {
        return Err(ParamError::DomainError(format!(
            "keep needs L·ln > 1 and T >= 0 (L={l}, T={t}, ln={log_factor})"
        )));
    }
    Ok((t * (-1.0 / denom).ln_1p()).exp())
}

/// One step of the recursion with the standard `Δ^{2/3}` slack and `ln Δ`.
pub fn next_params(l: f64, t: f64, keep: f64, delta: f64, eps: f64, k: u32) -> (f64, f64) {
    let slack = delta.powf(2.0 / 3.0);
    step(l, t, keep, delta.ln(), eps, k, slack, slack)
}

#[allow(clippy::too_many_arguments)]
fn step(l: f64, t: f64, keep: f64, log_factor: f64, eps: f64, k: u32, l_slack: f64, t_slack: f64) -> (f64, f64) {
    let keep_k = keep.powi(k as i32);
    let keep_k1 = keep.powi(k as i32 - 1);
    let l_next = l * keep_k - l_slack;
    let t_next = t * (1.0 - (1.0 - eps / 2.0) / log_factor * keep_k) * keep_k1 + t_slack;
    (l_next, t_next)
}

/// How the additive slack terms are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Slack {
    /// `Δ^{exponent}` added to `T` and subtracted from `L` (the faithful schedule uses 2/3).
    Power(f64),
    /// `z` binomial standard deviations: `z·sqrt(L Keep^k (1 - Keep^k))` for `L`
    /// and `z·sqrt(mean T_{i+1})` for `T`.
    Sigma(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HaltReason {
    LBelow(f64),
    TBelow(f64),
    RatioExceeded(f64),
    /// Row whose `L · ln` is too small for `Keep` to be defined.
    Degenerate,
    RowCap(usize),
    /// Supplied schedule (no recorded reason); its last row is terminal.
    EndOfSchedule,
}

impl std::fmt::Display for HaltReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HaltReason::LBelow(x) => write!(f, "L_below({x})"),
            HaltReason::TBelow(x) => write!(f, "T_below({x})"),
            HaltReason::RatioExceeded(x) => write!(f, "ratio_exceeded({x})"),
            HaltReason::Degenerate => write!(f, "degenerate"),
            HaltReason::RowCap(n) => write!(f, "row_cap({n})"),
            HaltReason::EndOfSchedule => write!(f, "end_of_schedule"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub i: usize,
    #[serde(rename = "L_i")]
    pub l: f64,
    #[serde(rename = "T_i")]
    pub t: f64,
    #[serde(rename = "Keep_i")]
    pub keep: f64,
    pub ratio: f64,
}

/// Everything that determines a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub eps: f64,
    pub delta: f64,
    pub k: u32,
    pub log_factor: f64,
    pub ratio_threshold: f64,
    pub floor: f64,
    pub slack: Slack,
    pub l0: f64,
    pub t0: f64,
    pub max_rows: usize,
}

impl TrajectoryConfig {
    /// The recursion as stated: `ln Δ`, `Δ^{2/3}` slack, `Δ^{9/10}` floor.
    pub fn faithful(eps: f64, delta: f64, k: u32, ratio_threshold: f64) -> Self {
        TrajectoryConfig {
            eps,
            delta,
            k,
            log_factor: delta.ln(),
            ratio_threshold,
            floor: delta.powf(0.9),
            slack: Slack::Power(2.0 / 3.0),
            l0: (1.0 + eps) * delta,
            t0: delta,
            max_rows: 10_000_000,
        }
    }

    /// Desk-scale schedule starting from the actual palette size `q`.
    pub fn engineering(q: u32, delta: f64, log_factor: f64, opts: &EngineeringOptions) -> Self {
        TrajectoryConfig {
            eps: (q as f64 / delta - 1.0).max(0.0),
            delta,
            k: 2,
            log_factor,
            ratio_threshold: opts.ratio_threshold,
            floor: opts.floor.unwrap_or_else(|| delta.powf(0.9)),
            slack: Slack::Sigma(opts.sigmas),
            l0: q as f64,
            t0: delta,
            max_rows: opts.max_rows,
        }
    }

    fn slacks(&self, l: f64, t: f64, keep: f64) -> (f64, f64) {
        match self.slack {
            Slack::Power(p) => {
                let s = self.delta.powf(p);
                (s, s)
            }
            Slack::Sigma(z) => {
                let keep_k = keep.powi(self.k as i32);
                let l_mean = l * keep_k;
                let t_mean = t
                    * (1.0 - (1.0 - self.eps / 2.0) / self.log_factor * keep_k)
                    * keep.powi(self.k as i32 - 1);
                (
                    z * (l_mean * (1.0 - keep_k)).max(0.0).sqrt(),
                    z * t_mean.max(0.0).sqrt(),
                )
            }
        }
    }

    /// Next `(L, T)` from the current row.
    pub fn advance(&self, l: f64, t: f64, keep: f64) -> (f64, f64) {
        let (ls, ts) = self.slacks(l, t, keep);
        step(l, t, keep, self.log_factor, self.eps, self.k, ls, ts)
    }

    fn halting(&self, l: f64, t: f64) -> Option<HaltReason> {
        if l < self.floor {
            Some(HaltReason::LBelow(self.floor))
        } else if t < self.floor {
            Some(HaltReason::TBelow(self.floor))
        } else if l > self.ratio_threshold * t {
            Some(HaltReason::RatioExceeded(self.ratio_threshold))
        } else {
            None
        }
    }
}

/// Options for [`TrajectoryConfig::engineering`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineeringOptions {
    pub sigmas: f64,
    /// Halting floor for `L` and `T`; `None` keeps `Δ^{9/10}`.
    pub floor: Option<f64>,
    pub ratio_threshold: f64,
    pub max_rows: usize,
}

impl Default for EngineeringOptions {
    fn default() -> Self {
        EngineeringOptions {
            sigmas: 4.0,
            floor: None,
            ratio_threshold: 10.0,
            max_rows: 1000,
        }
    }
}

/// A computed schedule: rows `0..=H`, where row `H` is the halting row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTrajectory {
    pub config: Option<TrajectoryConfig>,
    pub rows: Vec<TrajectoryRow>,
    pub halt: HaltReason,
    /// Index `I` of the first row with `L_I > threshold · T_I`.
    pub crossover: Option<usize>,
}

impl ParamTrajectory {
    /// Runs the recursion until a halting row, without progress checks.
    pub fn compute(cfg: &TrajectoryConfig) -> ParamTrajectory {
        Self::run(cfg, false).unwrap_or_else(|e| match e {
            ParamError::NoProgress { partial, .. } => *partial,
            _ => unreachable!("unchecked trajectories only fail on progress"),
        })
    }

    fn run(cfg: &TrajectoryConfig, check_progress: bool) -> Result<ParamTrajectory, ParamError> {
        let mut rows = Vec::new();
        let (mut l, mut t) = (cfg.l0, cfg.t0);
        let halt = loop {
            let i = rows.len();
            let ratio = l / t;
            let keep = keep_with_log(l, t, cfg.log_factor).unwrap_or(f64::NAN);
            rows.push(TrajectoryRow { i, l, t, keep, ratio });
            if let Some(h) = cfg.halting(l, t) {
                break h;
            }
            if keep.is_nan() {
                break HaltReason::Degenerate;
            }
            if rows.len() >= cfg.max_rows {
                break HaltReason::RowCap(cfg.max_rows);
            }
            let (ln, tn) = cfg.advance(l, t, keep);
            if check_progress && cfg.halting(ln, tn).is_none() && ln / tn <= ratio {
                let partial = ParamTrajectory {
                    config: Some(*cfg),
                    rows: rows.clone(),
                    halt: HaltReason::RowCap(rows.len()),
                    crossover: None,
                };
                return Err(ParamError::NoProgress {
                    row: i,
                    before: ratio,
                    after: ln / tn,
                    partial: Box::new(partial),
                });
            }
            l = ln;
            t = tn;
        };
        let crossover = match halt {
            HaltReason::RatioExceeded(_) => Some(rows.len() - 1),
            _ => None,
        };
        Ok(ParamTrajectory {
            config: Some(*cfg),
            rows,
            halt,
            crossover,
        })
    }

    /// Whether the additive slack stays below 1% of `L_i Keep_i^k` on every
    /// non-halting row; false flags a `Δ` too small for the recursion.
    pub fn slack_second_order(&self) -> bool {
        let Some(cfg) = self.config else { return true };
        let body = &self.rows[..self.rows.len().saturating_sub(1)];
        body.iter().all(|row| {
            let (ls, _) = cfg.slacks(row.l, row.t, row.keep);
            ls < 0.01 * row.l * row.keep.powi(cfg.k as i32)
        })
    }

    /// Schedule from bare rows (e.g. a loaded CSV); the last row is terminal.
    pub fn from_rows(rows: Vec<TrajectoryRow>) -> ParamTrajectory {
        ParamTrajectory {
            config: None,
            rows,
            halt: HaltReason::EndOfSchedule,
            crossover: None,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ParamError> {
        let mut w = csv::Writer::from_writer(writer);
        if self.rows.is_empty() {
            w.write_record(["i", "L_i", "T_i", "Keep_i", "ratio"])
                .map_err(|e| ParamError::Csv(e.to_string()))?;
        }
        for row in &self.rows {
            w.serialize(row).map_err(|e| ParamError::Csv(e.to_string()))?;
        }
        w.flush().map_err(|e| ParamError::Csv(e.to_string()))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Vec<TrajectoryRow>, ParamError> {
        let mut r = csv::Reader::from_reader(reader);
        r.deserialize()
            .collect::<Result<Vec<TrajectoryRow>, _>>()
            .map_err(|e| ParamError::Csv(e.to_string()))
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), ParamError> {
        let file = std::fs::File::create(path).map_err(|e| ParamError::Csv(e.to_string()))?;
        self.write_csv(file)
    }

    pub fn load_csv(path: &Path) -> Result<ParamTrajectory, ParamError> {
        let file = std::fs::File::open(path).map_err(|e| ParamError::Csv(e.to_string()))?;
        Ok(ParamTrajectory::from_rows(Self::read_csv(file)?))
    }
}

/// Faithful trajectory for `(ε, Δ, k)` with the given ratio threshold
/// (10 for graphs, `5k` for hypergraphs). Fails with `NoProgress` when the
/// ratio stops increasing while both parameters are above the floor.
pub fn trajectory(eps: f64, delta: f64, k: u32, ratio_threshold: f64) -> Result<ParamTrajectory, ParamError> {
    if !(eps > 0.0) || !(delta > 1.0) || k < 2 {
        return Err(ParamError::DomainError(format!(
            "trajectory needs eps > 0, Δ > 1, k >= 2 (eps={eps}, Δ={delta}, k={k})"
        )));
    }
    ParamTrajectory::run(&TrajectoryConfig::faithful(eps, delta, k, ratio_threshold), true)
}

/// Smallest real `X` with `(1+ε)(1+ε/4)^X = threshold`.
pub fn analytic_x(eps: f64, ratio_threshold: f64) -> f64 {
    (ratio_threshold / (1.0 + eps)).ln() / (1.0 + eps / 4.0).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossoverPoint {
    pub delta: f64,
    pub halt: HaltReason,
    pub crossover: Option<usize>,
    /// `I / ln Δ` when a crossover happened.
    pub x_effective: Option<f64>,
    pub x_analytic: f64,
}

pub fn default_crossover_grid() -> Vec<f64> {
    (4..=9).map(|p| 10f64.powi(p)).collect()
}

/// Sweeps `Δ` over `grid` and reports the crossover index of each trajectory.
pub fn crossover_analysis(eps: f64, k: u32, grid: &[f64]) -> Result<Vec<CrossoverPoint>, ParamError> {
    if !(eps > 0.0 && eps < 1.0 / 12.0) {
        return Err(ParamError::DomainError(format!(
            "crossover analysis needs 0 < eps < 1/12, got {eps}"
        )));
    }
    let threshold = if k == 2 { 10.0 } else { 5.0 * k as f64 };
    let x_analytic = analytic_x(eps, threshold);
    Ok(grid
        .iter()
        .map(|&delta| {
            let traj = ParamTrajectory::compute(&TrajectoryConfig::faithful(eps, delta, k, threshold));
            CrossoverPoint {
                delta,
                halt: traj.halt,
                crossover: traj.crossover,
                x_effective: traj.crossover.map(|i| i as f64 / delta.ln()),
                x_analytic,
            }
        })
        .collect())
}
