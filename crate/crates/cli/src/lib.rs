//! Chain-of-masses experiments: single solves, accelerator comparisons,
//! horizon sweeps and closed-loop MPC.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod records;
pub mod run;

pub use config::{Accelerator, Disturbance, Format, RunConfig, Start};
pub use run::{run_compare, run_mpc, run_solve, run_sweep, CompareReport, MpcReport, SolveReport, SweepReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Chain(#[from] chain_bench::ChainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<panoc_gn::Error> for CliError {
    fn from(e: panoc_gn::Error) -> Self {
        CliError::Chain(e.into())
    }
}

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    /// Every requested solve converged.
    Success = 0,
    /// Bad flags, config file or parameters.
    ConfigError = 2,
    /// A solve or closed-loop step did not converge, or a run aborted.
    SolverFailure = 3,
    /// Some sweep instances did not converge.
    PartialSweepFailure = 4,
}

impl CliError {
    pub fn exit_status(&self) -> ExitStatus {
        match self {
            CliError::Config(_) | CliError::Chain(chain_bench::ChainError::InvalidParams(_)) => ExitStatus::ConfigError,
            _ => ExitStatus::SolverFailure,
        }
    }
}
