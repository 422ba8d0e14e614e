//! Linear algebra: sparse SPD solves, saddle point systems with linear
//! constraints, and the dense generalized symmetric eigenproblem.

mod cg;
mod dense;
mod eigen;
mod kkt;
mod skyline;

use thiserror::Error;

pub use cg::{solve_spd, solve_spd_with, CgReport};
pub use dense::{DenseCholesky, DenseMatrix};
pub use eigen::{generalized_eigen, symmetric_eigen, Eigendecomposition};
pub use kkt::{solve_constrained, KktSolver};
pub use skyline::SkylineCholesky;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite (pivot {index})")]
    NotPositiveDefinite { index: usize },
    #[error("matrix is indefinite (eigenvalue {value:e})")]
    Indefinite { value: f64 },
    #[error("constraint row {row} is linearly dependent on the others")]
    DependentConstraint { row: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("non-finite value in input")]
    NonFinite,
}
