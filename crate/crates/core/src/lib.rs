//! Multicontinuum homogenization for time-fractional diffusion in
//! high-contrast media.
//!
//! The crate solves
//!
//! ```text
//!   D_t^α u − div(κ ∇u) = f(u)   in Ω = [0,1]², u = 0 on ∂Ω,
//! ```
//!
//! where `D_t^α` is the Caputo derivative of order `α ∈ (0, 1]`, on two
//! levels:
//!
//! * a fine bilinear finite element reference ([`fem`], [`solver`]) advanced
//!   by the implicit L1 scheme ([`timestep`]);
//! * a coarse two-continuum upscaled model ([`upscale`]) built from
//!   constrained cell problems, advanced either by L1 or by the
//!   Mittag-Leffler exponential integrator ([`mittag`], [`timestep`]).
//!
//! [`harness`] wires the pieces into reproducible experiments with
//! per-continuum relative error reporting.
//!
//! Numerical types are generic over [`Scalar`] (`f32`/`f64`); the aliases
//! below fix the scalar to `f64`, which is what the experiment driver uses.

pub mod fem;
pub mod grid;
pub mod harness;
pub mod mittag;
pub mod scalar;
pub mod solver;
pub mod timestep;
pub mod upscale;

pub use scalar::Scalar;

/// Scalar used by the experiment driver and the CLI.
pub type Real = f64;

pub type SparseMatrix = fem::SparseMatrix<Real>;
pub type PermeabilityField = grid::PermeabilityField<Real>;
pub type Eigendecomposition = solver::Eigendecomposition<Real>;
pub type DenseMatrix = solver::DenseMatrix<Real>;
pub type MLParams = mittag::MLParams<Real>;
pub type L1Coeffs = timestep::L1Coeffs<Real>;
pub type Trajectory = timestep::Trajectory<Real>;
pub type CellBasis = upscale::CellBasis<Real>;
pub type EffectiveBlock = upscale::EffectiveBlock<Real>;
pub type CoarseModel = upscale::CoarseModel<Real>;
