//! Two-continuum homogenization.
//!
//! Per coarse block `K`, constrained cell problems on the oversampled region
//! `K⁺` give `φ_i` (unit average in continuum `i` of every block of `K⁺`,
//! zero average in the other continuum) and `φ_i^m` (averages of the
//! centered coordinate `y^m − c^m`). Energies and masses of these functions
//! over `K` define the effective coefficients, which are then used as
//! piecewise constant coefficients of a bilinear coarse finite element model
//! with one field per continuum.

mod cell;
mod coarse;

use thiserror::Error;

use crate::fem::FemError;
use crate::grid::GridError;
use crate::solver::SolverError;

pub use cell::{solve_all_cell_problems, solve_cell_problems, CellBasis, CELL_RESIDUAL_TOL};
pub use coarse::{
    assemble_coarse, assemble_coarse_load, downscale, effective_coeffs, write_coefficients,
    CoarseModel, Downscaled, EffectiveBlock,
};

#[derive(Debug, Error)]
pub enum UpscaleError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("cell problem of block {block}: {source}")]
    Cell {
        block: usize,
        #[source]
        source: SolverError,
    },
    #[error("block {block}: constraint residual {residual:e} above tolerance")]
    Residual { block: usize, residual: f64 },
    #[error("coarse model: {0}")]
    Coarse(String),
    #[error("coarse eigendecomposition: {0}")]
    Eigen(#[source] SolverError),
    #[error("expected {expected} entries, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
