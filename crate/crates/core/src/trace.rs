//! Per-iteration run traces and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace io: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace csv: {0}")]
    Csv(#[from] csv::Error),
}

/// One nibble iteration as it was accepted, plus diagnostic tallies pooled
/// over every attempt of that iteration (rolled-back attempts included).
///
/// A run that exhausted its retries ends with a row for the failed iteration,
/// whose `retries` is the number of attempts minus one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub i: usize,
    pub sched_l: f64,
    pub sched_t: f64,
    pub keep: f64,
    pub ln_factor: f64,
    pub eps: f64,
    pub min_list: usize,
    pub mean_list: f64,
    pub max_tracker: usize,
    pub mean_tracker: f64,
    pub mean_t_prime: f64,
    pub newly_retained: usize,
    pub uncoloured: usize,
    pub retries: usize,
    pub loss_events: u64,
    pub loss_trials: u64,
    pub retention_kept: u64,
    pub retention_trials: u64,
    pub t_prime_sum: u64,
    pub t_prime_bound_sum: f64,
    pub t_prime_trackers: u64,
}

pub const TRACE_HEADER: [&str; 21] = [
    "i",
    "sched_l",
    "sched_t",
    "keep",
    "ln_factor",
    "eps",
    "min_list",
    "mean_list",
    "max_tracker",
    "mean_tracker",
    "mean_t_prime",
    "newly_retained",
    "uncoloured",
    "retries",
    "loss_events",
    "loss_trials",
    "retention_kept",
    "retention_trials",
    "t_prime_sum",
    "t_prime_bound_sum",
    "t_prime_trackers",
];

/// Run-level facts that accompany the per-iteration rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunMeta {
    pub seed: u64,
    pub eps: f64,
    pub delta: usize,
    pub q: u32,
    pub edges: usize,
    pub halt_reason: String,
    pub finisher_resamples: Option<usize>,
    pub finisher_success: Option<bool>,
    pub hypothesis_ok: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunTrace {
    pub meta: RunMeta,
    pub rows: Vec<TraceRow>,
}

impl RunTrace {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TraceError> {
        write_rows(&self.rows, writer)
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), TraceError> {
        write_rows(&self.rows, std::fs::File::create(path)?)
    }
}

pub fn write_rows<W: Write>(rows: &[TraceRow], writer: W) -> Result<(), TraceError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(TRACE_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(reader: R) -> Result<Vec<TraceRow>, TraceError> {
    let mut r = csv::Reader::from_reader(reader);
    Ok(r.deserialize().collect::<Result<Vec<TraceRow>, _>>()?)
}

pub fn load_rows(path: &Path) -> Result<Vec<TraceRow>, TraceError> {
    read_rows(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(i: usize) -> TraceRow {
        TraceRow {
            i,
            sched_l: 24.0 / (i as f64 + 1.0),
            sched_t: 20.0,
            keep: 0.1 + 0.7 / 3.0,
            ln_factor: 20f64.ln(),
            eps: 0.2,
            min_list: 3,
            mean_list: 13.7,
            max_tracker: 19,
            mean_tracker: 11.25,
            mean_t_prime: std::f64::consts::PI,
            newly_retained: 10,
            uncoloured: 100 - i,
            retries: 0,
            loss_events: 5,
            loss_trials: 50,
            retention_kept: 7,
            retention_trials: 25,
            t_prime_sum: 99,
            t_prime_bound_sum: 101.000_000_000_000_01,
            t_prime_trackers: 13,
        }
    }

    #[test]
    fn empty_trace_is_header_only() {
        let mut buf = Vec::new();
        RunTrace::default().write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), TRACE_HEADER.join(",") + "\n");
        assert!(read_rows(&buf[..]).unwrap().is_empty());
    }

    #[test]
    fn round_trip_is_exact() {
        let trace = RunTrace {
            meta: RunMeta::default(),
            rows: (0..10).map(row).collect(),
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 11);
        let back = read_rows(&buf[..]).unwrap();
        assert_eq!(back, trace.rows);
        let mut again = Vec::new();
        write_rows(&back, &mut again).unwrap();
        assert_eq!(again, buf);
    }
}
