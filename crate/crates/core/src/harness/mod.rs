//! Experiment driver: fine reference solves, continuum averages, relative
//! errors of the coarse methods, artifacts and parameter sweeps.
//!
//! Artifacts of [`run_experiment`] in the output directory:
//!
//! * `errors.csv`: `n,t,method,e0,e1,flag`, one row per method and step,
//!   `flag ∈ {ok, undefined, nonfinite}`; a flagged error is written `nan`.
//! * `summary.json`: terminal errors, first non-finite step and inner
//!   iterations per method, phase timings, coarse model size, the config
//!   and the build version.
//! * `snapshots/fields_nXXXX.csv` (`i,j,x,y,reference,<method>…`, fine
//!   nodes, downscaled coarse fields) and `snapshots/blocks_nXXXX.csv`
//!   (`block,x,y,ref0,ref1,<method>_0,<method>_1…`) at `t = 0, T/2, T`.

mod config;
mod metrics;
mod run;
mod sweep;

use thiserror::Error;

use crate::grid::GridError;

pub use config::{
    ExperimentConfig, GridSpec, InitialSpec, MediumSpec, OutputSpec, SolverSpec, SourceKind,
    SourceSpec, TimeSpec,
};
pub use metrics::{continuum_average, relative_error, BlockAverages, ErrorFlag, StepError};
pub use run::{
    build_upscaled, error_series, reference_trajectory, run_coarse, run_experiment, run_reference,
    write_errors_csv, ErrorReport, MethodReport, Setup, Upscaled,
};
pub use sweep::{sweep, write_sweep_csv, SweepAxis, SweepPoint};

/// Version string baked in at build time (`git describe` when available).
pub const VERSION: &str = env!("FRACMC_VERSION");

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{phase}: {message}")]
    Numerical { phase: String, message: String },
    #[error("expected {expected} entries, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("writing artifacts: {0}")]
    Io(#[from] std::io::Error),
}

impl From<GridError> for HarnessError {
    fn from(e: GridError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl HarnessError {
    pub(crate) fn numerical(phase: impl Into<String>, e: impl std::fmt::Display) -> Self {
        HarnessError::Numerical {
            phase: phase.into(),
            message: e.to_string(),
        }
    }

    /// 2 for configuration errors, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 3,
        }
    }

    pub fn phase(&self) -> &str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Numerical { phase, .. } => phase,
            HarnessError::Dimension { .. } => "dimension",
            HarnessError::Io(_) => "output",
        }
    }
}
