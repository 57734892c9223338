//! Full colouring pipeline: schedule → nibble → residual → finisher → validate.

use serde::{Deserialize, Serialize};

use crate::correspondence::{Colouring, EdgeCorrespondence};
use crate::finisher::{
    build_residual, check_hypothesis, complete_colouring, default_resample_cap, FinisherError, ResampleEntry,
};
use crate::nibble::{default_ln_factor, EngineConfig, Nibble, NibbleError, StopReason};
use crate::params::{EngineeringOptions, ParamTrajectory, TrajectoryConfig};
use crate::rng::Streams;
use crate::trace::RunTrace;
use crate::validate::validate_colouring;
use crate::graph::SimpleGraph;

/// Where the nibble schedule comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScheduleChoice {
    /// The recursion as stated, with `ε` defaulting to `q/Δ - 1`.
    Faithful { eps: Option<f64>, ratio_threshold: f64 },
    /// Desk-scale schedule starting at `L_0 = q` with binomial slack.
    Engineering(EngineeringOptions),
    Supplied(ParamTrajectory),
}

impl Default for ScheduleChoice {
    fn default() -> Self {
        ScheduleChoice::Faithful {
            eps: None,
            ratio_threshold: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub engine: EngineConfig,
    pub schedule: ScheduleChoice,
    /// Defaults to `10^4 · |residual edges|`.
    pub resample_cap: Option<usize>,
    pub hypothesis_factor: f64,
    pub keep_resample_log: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            engine: EngineConfig::default(),
            schedule: ScheduleChoice::default(),
            resample_cap: None,
            hypothesis_factor: 8.0,
            keep_resample_log: false,
        }
    }
}

/// Schedule used for `graph` with palette size `q`.
pub fn schedule_for(graph: &SimpleGraph, q: u32, config: &PipelineConfig) -> ParamTrajectory {
    let delta = graph.max_degree().max(1) as f64;
    match &config.schedule {
        ScheduleChoice::Faithful { eps, ratio_threshold } => {
            let eps = eps.unwrap_or(q as f64 / delta - 1.0);
            let mut cfg = TrajectoryConfig::faithful(eps, delta, 2, *ratio_threshold);
            cfg.max_rows = 10_000;
            ParamTrajectory::compute(&cfg)
        }
        ScheduleChoice::Engineering(opts) => {
            let ln = config
                .engine
                .ln_factor
                .unwrap_or_else(|| default_ln_factor(graph.max_degree()));
            ParamTrajectory::compute(&TrajectoryConfig::engineering(q, delta, ln, opts))
        }
        ScheduleChoice::Supplied(t) => t.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Success,
    /// Property (1) could not be re-established within the retry limit.
    RetryExhausted,
    ResampleCapExceeded,
    /// Some residual list was empty, so no completion was attempted.
    EmptyResidual,
    ValidationFailed,
    InvalidInput,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::InvalidInput => 2,
            Status::RetryExhausted => 3,
            Status::ResampleCapExceeded | Status::EmptyResidual => 4,
            Status::ValidationFailed => 5,
        }
    }

    pub fn is_success(self) -> bool {
        self == Status::Success
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub status: Status,
    pub message: Option<String>,
    /// Only present on success.
    pub colouring: Option<Colouring>,
    pub partial: Option<Colouring>,
    pub trace: RunTrace,
    pub stop: Option<StopReason>,
    pub residual_edges: usize,
    pub resamples: usize,
    pub resample_log: Vec<ResampleEntry>,
}

/// Runs the whole pipeline. Any reported success has passed the independent validator.
pub fn run_pipeline(graph: &SimpleGraph, corr: &EdgeCorrespondence, config: &PipelineConfig, seed: u64) -> PipelineReport {
    let mut report = PipelineReport {
        status: Status::InvalidInput,
        message: None,
        colouring: None,
        partial: None,
        trace: RunTrace::default(),
        stop: None,
        residual_edges: 0,
        resamples: 0,
        resample_log: Vec::new(),
    };
    let nibble = match Nibble::new(graph, corr, config.engine) {
        Ok(n) => n,
        Err(e) => {
            report.message = Some(e.to_string());
            return report;
        }
    };
    let schedule = schedule_for(graph, corr.q(), config);
    let streams = Streams::new(seed);
    let run = match nibble.run_with_streams(&schedule, &streams) {
        Ok(run) => run,
        Err(failure) => {
            report.status = match failure.error {
                NibbleError::InvalidCorrespondence(_) | NibbleError::ScheduleEmpty => Status::InvalidInput,
                _ => Status::RetryExhausted,
            };
            report.message = Some(failure.error.to_string());
            report.trace = failure.trace;
            return report;
        }
    };
    report.trace = run.trace;
    report.stop = Some(run.stop);
    report.partial = Some(run.colouring.clone());
    let residual = match build_residual(graph, corr, &run.state) {
        Ok(r) => r,
        Err(e) => {
            report.status = Status::EmptyResidual;
            report.message = Some(e.to_string());
            return report;
        }
    };
    report.residual_edges = residual.edges().len();
    report.trace.meta.hypothesis_ok = Some(check_hypothesis(&residual, config.hypothesis_factor).is_ok());
    let cap = config.resample_cap.unwrap_or_else(|| default_resample_cap(&residual));
    let mut rng = streams.finisher();
    match complete_colouring(&residual, &mut rng, cap, config.keep_resample_log) {
        Ok(done) => {
            report.resamples = done.resamples;
            report.resample_log = done.log;
            report.trace.meta.finisher_resamples = Some(done.resamples);
            report.trace.meta.finisher_success = Some(true);
            let check = validate_colouring(graph, corr, &done.colouring);
            if check.is_valid() {
                report.status = Status::Success;
                report.colouring = Some(done.colouring);
            } else {
                report.status = Status::ValidationFailed;
                report.message = Some(format!("{} problems, first: {}", check.problems.len(), check.problems[0]));
            }
        }
        Err(e) => {
            if let FinisherError::ResampleCapExceeded { count, .. } = &e {
                report.resamples = *count;
                report.trace.meta.finisher_resamples = Some(*count);
            }
            report.trace.meta.finisher_success = Some(false);
            report.status = Status::ResampleCapExceeded;
            report.message = Some(e.to_string());
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspondence::{identity_correspondence, random_correspondence};
    use crate::graph::{gen_path, gen_random_max_degree};

    #[test]
    fn exit_codes() {
        assert_eq!(Status::Success.exit_code(), 0);
        assert_eq!(Status::InvalidInput.exit_code(), 2);
        assert_eq!(Status::RetryExhausted.exit_code(), 3);
        assert_eq!(Status::ResampleCapExceeded.exit_code(), 4);
        assert_eq!(Status::ValidationFailed.exit_code(), 5);
    }

    #[test]
    fn path_identity_some_seed_succeeds() {
        let g = gen_path(3).unwrap();
        let c = identity_correspondence(&g, 2).unwrap();
        let cfg = PipelineConfig::default();
        let ok = (0..20).filter(|&s| run_pipeline(&g, &c, &cfg, s).status.is_success()).count();
        assert!(ok > 0);
    }

    #[test]
    fn success_always_validates() {
        for seed in 0..10 {
            let g = gen_random_max_degree(60, 8, seed).unwrap();
            let q = (1.2 * g.max_degree() as f64).ceil() as u32;
            let c = random_correspondence(&g, q, 1.0, seed).unwrap();
            for schedule in [ScheduleChoice::default(), ScheduleChoice::Engineering(EngineeringOptions::default())] {
                let cfg = PipelineConfig {
                    schedule,
                    ..PipelineConfig::default()
                };
                let r = run_pipeline(&g, &c, &cfg, seed);
                if let Some(col) = &r.colouring {
                    assert!(validate_colouring(&g, &c, col).is_valid());
                }
                assert_eq!(r.status.is_success(), r.colouring.is_some());
            }
        }
    }

    #[test]
    fn pipeline_is_deterministic() {
        let g = gen_random_max_degree(40, 6, 3).unwrap();
        let c = random_correspondence(&g, 8, 1.0, 3).unwrap();
        let cfg = PipelineConfig {
            schedule: ScheduleChoice::Engineering(EngineeringOptions::default()),
            ..PipelineConfig::default()
        };
        assert_eq!(run_pipeline(&g, &c, &cfg, 11), run_pipeline(&g, &c, &cfg, 11));
    }
}
