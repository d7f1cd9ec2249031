//! Output rows and their CSV / JSON encoding.
//!
//! Every table has a fixed column set; the JSON form is an array of objects
//! with the same field names. Wall times live in their own `*timing*`
//! tables so that every other file is reproducible byte for byte.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use panoc_gn::{SolveOutput, SolverStats, Status, StepKind, TraceRecord};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{Accelerator, Format, Start};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIter,
    LineSearchFail,
    Indefinite,
    /// The solver returned an error instead of a result.
    Error,
}

impl From<Status> for RunStatus {
    fn from(s: Status) -> Self {
        match s {
            Status::Converged => RunStatus::Converged,
            Status::MaxIter => RunStatus::MaxIter,
            Status::LineSearchFail => RunStatus::LineSearchFail,
            Status::Indefinite => RunStatus::Indefinite,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Start,
    GaussNewton,
    Lbfgs,
    ForwardBackward,
}

impl From<StepKind> for Kind {
    fn from(k: StepKind) -> Self {
        match k {
            StepKind::Start => Kind::Start,
            StepKind::GaussNewton => Kind::GaussNewton,
            StepKind::Lbfgs => Kind::Lbfgs,
            StepKind::ForwardBackward => Kind::ForwardBackward,
        }
    }
}

/// One solver iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub accelerator: Accelerator,
    pub iter: usize,
    pub gamma: f64,
    pub tau: f64,
    pub kind: Kind,
    pub psi: f64,
    pub fbe: f64,
    pub residual: f64,
    pub p_norm: f64,
    /// Rounding scale of `psi`.
    pub noise: f64,
}

impl TraceRow {
    pub fn new(accelerator: Accelerator, r: &TraceRecord<f64>) -> Self {
        Self {
            accelerator,
            iter: r.iter,
            gamma: r.gamma,
            tau: r.tau,
            kind: r.kind.into(),
            psi: r.psi,
            fbe: r.fbe,
            residual: r.residual,
            p_norm: r.p_norm,
            noise: r.noise,
        }
    }
}

pub fn trace_rows(accelerator: Accelerator, out: &SolveOutput<f64>) -> Vec<TraceRow> {
    out.trace.iter().map(|r| TraceRow::new(accelerator, r)).collect()
}

/// One solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub accelerator: Accelerator,
    pub horizon: usize,
    pub instance: usize,
    pub status: RunStatus,
    pub iterations: usize,
    pub gn_computed: usize,
    pub gn_accepted: usize,
    pub gn_unit: usize,
    pub lbfgs_steps: usize,
    pub fb_steps: usize,
    pub gamma_halvings: usize,
    pub tau_halvings: usize,
    /// Empty when the solver returned an error.
    pub psi: Option<f64>,
    pub residual: Option<f64>,
    pub gamma: Option<f64>,
}

impl SummaryRow {
    pub fn new(accelerator: Accelerator, horizon: usize, instance: usize, s: &SolverStats) -> Self {
        Self {
            accelerator,
            horizon,
            instance,
            status: s.status.into(),
            iterations: s.iterations,
            gn_computed: s.gn_steps_computed,
            gn_accepted: s.gn_steps_accepted,
            gn_unit: s.gn_steps_accepted_unit,
            lbfgs_steps: s.lbfgs_steps,
            fb_steps: s.fb_steps,
            gamma_halvings: s.gamma_halvings,
            tau_halvings: s.tau_halvings,
            psi: Some(s.psi_final),
            residual: Some(s.final_residual),
            gamma: Some(s.gamma_final),
        }
    }

    /// Row for a solve that returned an error.
    pub fn failed(accelerator: Accelerator, horizon: usize, instance: usize) -> Self {
        Self {
            status: RunStatus::Error,
            psi: None,
            residual: None,
            gamma: None,
            ..Self::new(accelerator, horizon, instance, &SolverStats::default())
        }
    }
}

/// Wall time of one solve. `step` is the closed-loop step, 0 elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub accelerator: Accelerator,
    pub horizon: usize,
    pub instance: usize,
    pub start: Start,
    pub step: usize,
    pub wall_time_s: f64,
}

/// Iteration statistics per (horizon, accelerator).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub horizon: usize,
    pub accelerator: Accelerator,
    pub count: usize,
    pub converged: usize,
    pub iterations_median: f64,
    pub iterations_p10: f64,
    pub iterations_p90: f64,
}

/// Wall time statistics per (horizon, accelerator).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingAggregateRow {
    pub horizon: usize,
    pub accelerator: Accelerator,
    pub count: usize,
    pub median_s: f64,
    pub p10_s: f64,
    pub p90_s: f64,
}

/// One closed-loop step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcRow {
    pub accelerator: Accelerator,
    pub start: Start,
    pub step: usize,
    pub time: f64,
    pub status: RunStatus,
    pub iterations: usize,
    pub psi: Option<f64>,
    pub residual: Option<f64>,
    /// `‖x − x_eq‖` at the start of the step.
    pub tracking_error: f64,
    pub u_x: f64,
    pub u_y: f64,
    pub u_z: f64,
}

/// One closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcSummaryRow {
    pub accelerator: Accelerator,
    pub start: Start,
    pub steps: usize,
    pub converged: usize,
    pub total_iterations: usize,
    pub final_tracking_error: f64,
    pub tracked: bool,
}

/// Linear interpolation between order statistics; NaN for empty input.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Writes `rows` to `dir/stem.{csv,json}` and returns the path.
pub fn write_rows<T: Serialize>(dir: &Path, stem: &str, format: Format, rows: &[T]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{stem}.{}", format.extension()));
    let mut w = BufWriter::new(File::create(&path)?);
    match format {
        Format::Csv => {
            let mut csv = csv::Writer::from_writer(&mut w);
            for r in rows {
                csv.serialize(r)?;
            }
            csv.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, rows)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(path)
}

/// Reads a table written by [`write_rows`]; the format follows the extension.
pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let r = BufReader::new(File::open(path)?);
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => Ok(serde_json::from_reader(r)?),
        _ => csv::Reader::from_reader(r)
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(Into::into),
    }
}
