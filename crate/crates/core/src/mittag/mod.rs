//! Two-parameter Mittag-Leffler function `E_{α,β}(z) = Σ z^k / Γ(αk + β)`
//! on the real axis and the relaxation kernel
//! `e_{α,β}(t, λ) = t^{β−1} E_{α,β}(−t^α λ)`.
//!
//! Evaluation switches between three regimes: the power series near the
//! origin, the asymptotic expansion far out on the negative axis, and
//! numerical inversion of the Laplace transform `s^{α−β}/(s^α − z)` on a
//! parabolic contour in between (and whenever the other two lose accuracy).

mod gamma;
mod regimes;

use rayon::prelude::*;
use thiserror::Error;

use crate::Scalar;

pub use gamma::{gamma, ln_gamma, rgamma};
pub use regimes::{Regime, ASYMPTOTIC_THRESHOLD, CONTOUR_MU, CONTOUR_STEP, SERIES_RADIUS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MLError {
    #[error("alpha = {0} outside (0, 2]")]
    Alpha(f64),
    #[error("beta = {0} must be positive")]
    Beta(f64),
    #[error("tolerance = {0} must lie in (0, 1)")]
    Tolerance(f64),
    #[error("argument z = {0} outside the supported domain (z < 1)")]
    Argument(f64),
    #[error("kernel needs t >= 0 and lambda >= 0 (t = {t}, lambda = {lambda})")]
    KernelDomain { t: f64, lambda: f64 },
    #[error("kernel is singular at t = 0 for beta = {0} < 1")]
    SingularKernel(f64),
    #[error("{regime:?} regime did not reach the tolerance at z = {z}")]
    NotConverged { regime: Regime, z: f64 },
    #[error("element {index}: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<MLError>,
    },
}

/// Parameters of `E_{α,β}`.
///
/// Orders `α ∈ (0, 1]` cover fractional relaxation; the evaluator also
/// accepts `α ∈ (1, 2]` so that oscillatory identities such as
/// `E_{2,1}(−x²) = cos x` can be checked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MLParams<T> {
    alpha: T,
    beta: T,
    tol: T,
}

pub const DEFAULT_TOLERANCE: f64 = 1e-12;

impl<T: Scalar> MLParams<T> {
    pub fn new(alpha: T, beta: T) -> Result<Self, MLError> {
        Self::with_tolerance(alpha, beta, T::of(DEFAULT_TOLERANCE))
    }

    pub fn with_tolerance(alpha: T, beta: T, tol: T) -> Result<Self, MLError> {
        if !(alpha > T::zero() && alpha <= T::of(2.0)) {
            return Err(MLError::Alpha(alpha.to_f64_lossy()));
        }
        if !(beta > T::zero()) || !beta.is_finite() {
            return Err(MLError::Beta(beta.to_f64_lossy()));
        }
        if !(tol > T::zero() && tol < T::one()) {
            return Err(MLError::Tolerance(tol.to_f64_lossy()));
        }
        Ok(Self { alpha, beta, tol })
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn tolerance(&self) -> T {
        self.tol
    }

    /// Same order and tolerance, different `β`.
    pub fn with_beta(&self, beta: T) -> Result<Self, MLError> {
        Self::with_tolerance(self.alpha, beta, self.tol)
    }

    fn as_f64(&self) -> (f64, f64, f64) {
        (
            self.alpha.to_f64_lossy(),
            self.beta.to_f64_lossy(),
            self.tol.to_f64_lossy().max(1e-15),
        )
    }
}

/// `E_{α,β}(z)` for real `z < 1`.
pub fn ml<T: Scalar>(params: &MLParams<T>, z: T) -> Result<T, MLError> {
    let (a, b, tol) = params.as_f64();
    regimes::evaluate(a, b, z.to_f64_lossy(), tol).map(T::of)
}

/// `E_{α,β}(z)` forced through one regime, without fallback.
pub fn ml_in_regime<T: Scalar>(params: &MLParams<T>, z: T, regime: Regime) -> Result<T, MLError> {
    let (a, b, tol) = params.as_f64();
    let z = z.to_f64_lossy();
    regimes::check_argument(z)?;
    regimes::in_regime(a, b, z, tol, regime).map(T::of)
}

/// Regime [`ml`] selects first for this argument.
pub fn preferred_regime<T: Scalar>(params: &MLParams<T>, z: T) -> Regime {
    regimes::preferred(params.alpha.to_f64_lossy(), z.to_f64_lossy())
}

/// `e_{α,β}(t, λ) = t^{β−1} E_{α,β}(−t^α λ)`.
pub fn e_ab<T: Scalar>(params: &MLParams<T>, t: T, lambda: T) -> Result<T, MLError> {
    let (tf, lf) = (t.to_f64_lossy(), lambda.to_f64_lossy());
    if !(tf >= 0.0) || !(lf >= 0.0) || !tf.is_finite() || lf.is_nan() {
        return Err(MLError::KernelDomain { t: tf, lambda: lf });
    }
    let (a, b, tol) = params.as_f64();
    if tf == 0.0 {
        return match b {
            b if b < 1.0 => Err(MLError::SingularKernel(b)),
            b if b == 1.0 => Ok(T::one()),
            _ => Ok(T::zero()),
        };
    }
    let z = if lf == 0.0 { 0.0 } else { -tf.powf(a) * lf };
    let e = if z.is_infinite() {
        0.0
    } else {
        regimes::evaluate(a, b, z, tol)?
    };
    Ok(T::of(tf.powf(b - 1.0) * e))
}

/// Elementwise [`ml`], evaluated in parallel with input ordering preserved.
pub fn ml_batch<T: Scalar>(params: &MLParams<T>, z: &[T]) -> Result<Vec<T>, MLError> {
    z.par_iter()
        .enumerate()
        .map(|(index, &zi)| {
            ml(params, zi).map_err(|e| MLError::AtIndex {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}
