//! Caputo time integrators for `M D_t^α U + A U = f(t, U)`.
//!
//! * L1 (implicit, with Picard iteration for state-dependent sources, and
//!   the explicit variant that lags stiffness and source);
//! * the Mittag-Leffler exponential integrator on an eigendecomposition of
//!   `(A, M)`, explicit in the source.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::fem::SparseMatrix;
use crate::mittag::{e_ab, gamma, MLError, MLParams};
use crate::scalar::{all_finite, axpy, norm2};
use crate::solver::{Eigendecomposition, SkylineCholesky, SolverError};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum TimestepError {
    #[error("invalid time stepping parameters: {0}")]
    Parameters(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(
        "Picard iteration did not converge at step {step} (last relative update {residual:e})"
    )]
    Picard { step: usize, residual: f64 },
    #[error("kernel evaluation failed: {0}")]
    Kernel(#[from] MLError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// L1 weights `b_j = (j+1)^{1−α} − j^{1−α}` and `α₀ = Γ(2−α) τ^α`.
#[derive(Debug, Clone, PartialEq)]
pub struct L1Coeffs<T> {
    alpha: T,
    tau: T,
    steps: usize,
    b: Vec<T>,
    alpha0: T,
}

impl<T: Scalar> L1Coeffs<T> {
    pub fn new(alpha: T, tau: T, steps: usize) -> Result<Self, TimestepError> {
        if !(alpha > T::zero() && alpha <= T::one()) {
            return Err(TimestepError::Parameters(format!(
                "alpha = {alpha} outside (0, 1]"
            )));
        }
        if !(tau > T::zero()) || !tau.is_finite() {
            return Err(TimestepError::Parameters(format!(
                "tau = {tau} must be positive"
            )));
        }
        if steps == 0 {
            return Err(TimestepError::Parameters("N must be at least 1".into()));
        }
        let e = T::one() - alpha;
        let b = (0..=steps)
            .map(|j| {
                let j = T::of_usize(j);
                (j + T::one()).powf(e) - if j.is_zero() { T::zero() } else { j.powf(e) }
            })
            .collect();
        let alpha0 = gamma(T::of(2.0) - alpha) * tau.powf(alpha);
        Ok(Self {
            alpha,
            tau,
            steps,
            b,
            alpha0,
        })
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn b(&self, j: usize) -> T {
        self.b[j]
    }

    pub fn weights(&self) -> &[T] {
        &self.b
    }

    pub fn alpha0(&self) -> T {
        self.alpha0
    }

    pub fn time(&self, n: usize) -> T {
        T::of_usize(n) * self.tau
    }
}

/// Right-hand side `f(t, U)` as a load vector.
pub trait Source<T>: Sync {
    fn load(&self, t: T, u: &[T], out: &mut [T]);

    /// `false` when the load ignores `u`; implicit steps then skip Picard.
    fn depends_on_state(&self) -> bool;
}

/// Time- and state-independent load.
#[derive(Debug, Clone)]
pub struct ConstantSource<T>(pub Vec<T>);

impl<T: Scalar> Source<T> for ConstantSource<T> {
    fn load(&self, _t: T, _u: &[T], out: &mut [T]) {
        out.copy_from_slice(&self.0);
    }

    fn depends_on_state(&self) -> bool {
        false
    }
}

/// `f0 + M (U − U³)`: the cubic reaction applied to the nodal coefficients
/// and integrated with the mass matrix.
#[derive(Debug, Clone)]
pub struct SemilinearSource<T> {
    pub f0: Vec<T>,
    pub mass: SparseMatrix<T>,
    /// Nodes whose load is forced to zero (Dirichlet rows).
    pub fixed: Vec<usize>,
}

impl<T: Scalar> Source<T> for SemilinearSource<T> {
    fn load(&self, _t: T, u: &[T], out: &mut [T]) {
        let r: Vec<T> = u.iter().map(|&x| x - x * x * x).collect();
        self.mass.mul_vec_into(&r, out);
        for (o, &f) in out.iter_mut().zip(&self.f0) {
            *o = *o + f;
        }
        for &p in &self.fixed {
            out[p] = T::zero();
        }
    }

    fn depends_on_state(&self) -> bool {
        true
    }
}

/// Componentwise `U − U³ + f0`.
pub fn semilinear_f<T: Scalar>(u: &[T], f0: &[T]) -> Vec<T> {
    u.iter().zip(f0).map(|(&x, &f)| x - x * x * x + f).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    L1Implicit,
    L1Explicit,
    ExponentialIntegrator,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::L1Implicit => "l1-implicit",
            Method::L1Explicit => "l1-explicit",
            Method::ExponentialIntegrator => "ei",
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        match s {
            "l1-implicit" => Some(Method::L1Implicit),
            "l1-explicit" => Some(Method::L1Explicit),
            "ei" => Some(Method::ExponentialIntegrator),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub method: Method,
    pub times: Vec<T>,
    pub states: Vec<Vec<T>>,
    /// `finite[n]` is false from the first step with a non-finite entry on.
    pub finite: Vec<bool>,
    /// Inner (Picard) iterations per step; zero for single-solve steps.
    pub inner_iterations: Vec<usize>,
}

impl<T: Scalar> Trajectory<T> {
    fn start(method: Method, u0: &[T], steps: usize) -> Self {
        let mut t = Self {
            method,
            times: Vec::with_capacity(steps + 1),
            states: Vec::with_capacity(steps + 1),
            finite: Vec::with_capacity(steps + 1),
            inner_iterations: Vec::with_capacity(steps + 1),
        };
        t.push(T::zero(), u0.to_vec(), 0);
        t
    }

    fn push(&mut self, time: T, u: Vec<T>, iters: usize) {
        let ok = self.finite.last().copied().unwrap_or(true) && all_finite(&u);
        self.times.push(time);
        self.states.push(u);
        self.finite.push(ok);
        self.inner_iterations.push(iters);
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &[T] {
        self.states.last().map_or(&[], Vec::as_slice)
    }

    pub fn all_finite(&self) -> bool {
        self.finite.iter().all(|&f| f)
    }

    /// First step whose state is non-finite.
    pub fn first_nonfinite(&self) -> Option<usize> {
        self.finite.iter().position(|&f| !f)
    }

    pub fn total_inner_iterations(&self) -> usize {
        self.inner_iterations.iter().sum()
    }

    /// Every `factor`-th state (`0, factor, 2·factor, …`).
    pub fn subsample(&self, factor: usize) -> Self {
        fn keep<X: Clone>(v: &[X], k: usize) -> Vec<X> {
            v.iter().step_by(k.max(1)).cloned().collect()
        }
        Self {
            method: self.method,
            times: keep(&self.times, factor),
            states: keep(&self.states, factor),
            finite: keep(&self.finite, factor),
            inner_iterations: keep(&self.inner_iterations, factor),
        }
    }

    /// CSV `n,t,flag[,U_0,...]`.
    pub fn write_csv(&self, path: impl AsRef<Path>, full: bool) -> Result<(), TimestepError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(out, "n,t,flag")?;
        if full {
            for i in 0..self.states.first().map_or(0, Vec::len) {
                write!(out, ",U_{i}")?;
            }
        }
        writeln!(out)?;
        for (n, (t, u)) in self.times.iter().zip(&self.states).enumerate() {
            write!(
                out,
                "{n},{t:e},{}",
                if self.finite[n] { "ok" } else { "nonfinite" }
            )?;
            if full {
                for x in u {
                    write!(out, ",{x:.17e}")?;
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
        }
    }
}

fn check_dims<T: Scalar>(
    m: &SparseMatrix<T>,
    a: Option<&SparseMatrix<T>>,
    u0: &[T],
) -> Result<(), TimestepError> {
    let n = u0.len();
    for mat in std::iter::once(m).chain(a) {
        if mat.nrows() != n || mat.ncols() != n {
            return Err(TimestepError::Dimension {
                expected: n,
                got: mat.nrows(),
            });
        }
    }
    Ok(())
}

/// `(1−b₁)U^n + Σ_{j=1}^{n−1}(b_j − b_{j+1})U^{n−j} + b_n U⁰`, or `U⁰` for the
/// first step.
fn l1_history<T: Scalar>(c: &L1Coeffs<T>, states: &[Vec<T>]) -> Vec<T> {
    let n = states.len() - 1;
    if n == 0 {
        return states[0].clone();
    }
    let mut h = vec![T::zero(); states[0].len()];
    axpy(T::one() - c.b(1), &states[n], &mut h);
    for j in 1..n {
        axpy(c.b(j) - c.b(j + 1), &states[n - j], &mut h);
    }
    axpy(c.b(n), &states[0], &mut h);
    h
}

/// Implicit L1:
/// `(M + α₀A)U^{n+1} = α₀f(t_{n+1}, U^{n+1}) + M·history`.
pub fn l1_implicit_solve<T: Scalar, S: Source<T> + ?Sized>(
    m: &SparseMatrix<T>,
    a: &SparseMatrix<T>,
    source: &S,
    u0: &[T],
    coeffs: &L1Coeffs<T>,
    picard: PicardOptions,
) -> Result<Trajectory<T>, TimestepError> {
    check_dims(m, Some(a), u0)?;
    let dim = u0.len();
    let a0 = coeffs.alpha0();
    let system = m.linear_combination(T::one(), a, a0);
    let factor = SkylineCholesky::factor(&system)?;
    let mut traj = Trajectory::start(Method::L1Implicit, u0, coeffs.steps());
    let mut f = vec![T::zero(); dim];
    for n in 0..coeffs.steps() {
        let t1 = coeffs.time(n + 1);
        let mh = m.mul_vec(&l1_history(coeffs, &traj.states));
        let solve = |state: &[T], f: &mut [T]| -> Vec<T> {
            source.load(t1, state, f);
            let mut rhs = mh.clone();
            axpy(a0, f, &mut rhs);
            factor.solve_in_place(&mut rhs);
            rhs
        };
        let mut u = solve(&traj.states[n], &mut f);
        let mut iters = 0;
        if source.depends_on_state() {
            let tol = T::of(picard.tol);
            loop {
                iters += 1;
                let next = solve(&u, &mut f);
                let diff: Vec<T> = next.iter().zip(&u).map(|(p, q)| *p - *q).collect();
                let scale = norm2(&next);
                let rel = if scale > T::zero() {
                    norm2(&diff) / scale
                } else {
                    norm2(&diff)
                };
                u = next;
                if rel <= tol {
                    break;
                }
                if iters >= picard.max_iter || !rel.is_finite() {
                    return Err(TimestepError::Picard {
                        step: n + 1,
                        residual: rel.to_f64_lossy(),
                    });
                }
            }
        }
        traj.push(t1, u, iters);
    }
    Ok(traj)
}

/// Explicit L1: `M U^{n+1} = α₀(f(t_n, U^n) − A U^n) + M·history`.
/// Blow-up is recorded in the trajectory flags; later states are NaN.
pub fn l1_explicit_solve<T: Scalar, S: Source<T> + ?Sized>(
    m: &SparseMatrix<T>,
    a: &SparseMatrix<T>,
    source: &S,
    u0: &[T],
    coeffs: &L1Coeffs<T>,
) -> Result<Trajectory<T>, TimestepError> {
    check_dims(m, Some(a), u0)?;
    let dim = u0.len();
    let a0 = coeffs.alpha0();
    let factor = SkylineCholesky::factor(m)?;
    let mut traj = Trajectory::start(Method::L1Explicit, u0, coeffs.steps());
    let mut f = vec![T::zero(); dim];
    for n in 0..coeffs.steps() {
        let t1 = coeffs.time(n + 1);
        if !traj.finite[n] {
            traj.push(t1, vec![T::nan(); dim], 0);
            continue;
        }
        let un = &traj.states[n];
        source.load(coeffs.time(n), un, &mut f);
        let au = a.mul_vec(un);
        let mut rhs = m.mul_vec(&l1_history(coeffs, &traj.states));
        for i in 0..dim {
            rhs[i] = rhs[i] + a0 * (f[i] - au[i]);
        }
        factor.solve_in_place(&mut rhs);
        traj.push(t1, rhs, 0);
    }
    Ok(traj)
}

/// Tables `e_{α,1}(kτ, λ_i)` and `e_{α,α+1}(kτ, λ_i)` for `k = 0..=N`.
#[derive(Debug, Clone)]
pub struct KernelTable<T> {
    pub relax: Vec<Vec<T>>,
    pub integrated: Vec<Vec<T>>,
}

impl<T: Scalar> KernelTable<T> {
    pub fn new(alpha: T, tau: T, steps: usize, lambdas: &[T]) -> Result<Self, TimestepError> {
        let p1 = MLParams::new(alpha, T::one())?;
        let p2 = MLParams::new(alpha, alpha + T::one())?;
        let rows = |p: &MLParams<T>| -> Result<Vec<Vec<T>>, MLError> {
            (0..=steps)
                .into_par_iter()
                .map(|k| {
                    lambdas
                        .iter()
                        .map(|&l| e_ab(p, T::of_usize(k) * tau, l))
                        .collect::<Result<Vec<T>, _>>()
                })
                .collect()
        };
        let relax = rows(&p1)?;
        let integrated = rows(&p2)?;
        for row in relax.iter().chain(&integrated) {
            if !all_finite(row) {
                return Err(TimestepError::Kernel(MLError::NotConverged {
                    regime: crate::mittag::Regime::Contour,
                    z: f64::NAN,
                }));
            }
        }
        Ok(Self { relax, integrated })
    }
}

/// Exponential integrator on `(A, M) = (Q, Λ)`:
/// `U^n = Q[e_{α,1}(t_n)∘c⁰ + e_{α,α+1}(t_n)∘g⁰ + Σ_{j=1}^{n−1} e_{α,α+1}(t_{n−j})∘(g^j − g^{j−1})]`
/// with `c⁰ = QᵀMU⁰` and `g^j = Qᵀ f(t_j, U^j)`.
pub fn ei_solve<T: Scalar, S: Source<T> + ?Sized>(
    eig: &Eigendecomposition<T>,
    source: &S,
    u0: &[T],
    alpha: T,
    tau: T,
    steps: usize,
) -> Result<Trajectory<T>, TimestepError> {
    let dim = eig.dim();
    if u0.len() != dim {
        return Err(TimestepError::Dimension {
            expected: dim,
            got: u0.len(),
        });
    }
    if !(alpha > T::zero() && alpha <= T::one()) || !(tau > T::zero()) || steps == 0 {
        return Err(TimestepError::Parameters(format!(
            "alpha = {alpha}, tau = {tau}, N = {steps}"
        )));
    }
    let kernels = KernelTable::new(alpha, tau, steps, &eig.values)?;
    let c0 = eig.project(u0);
    let mut traj = Trajectory::start(Method::ExponentialIntegrator, u0, steps);
    let mut f = vec![T::zero(); dim];
    // increments d^0 = g^0, d^j = g^j − g^{j−1}
    let mut increments: Vec<Vec<T>> = Vec::with_capacity(steps);
    let mut g_prev = vec![T::zero(); dim];
    for n in 1..=steps {
        let tn = T::of_usize(n) * tau;
        if !traj.finite[n - 1] {
            traj.push(tn, vec![T::nan(); dim], 0);
            continue;
        }
        source.load(T::of_usize(n - 1) * tau, &traj.states[n - 1], &mut f);
        let g = eig.project_load(&f);
        increments.push(g.iter().zip(&g_prev).map(|(a, b)| *a - *b).collect());
        g_prev = g;
        let mut coef: Vec<T> = kernels.relax[n]
            .iter()
            .zip(&c0)
            .map(|(e, c)| *e * *c)
            .collect();
        for (j, d) in increments.iter().enumerate() {
            let e2 = &kernels.integrated[n - j];
            for i in 0..dim {
                coef[i] = coef[i] + e2[i] * d[i];
            }
        }
        traj.push(tn, eig.reconstruct(&coef), 0);
    }
    Ok(traj)
}

/// Fitted constants `C′(n) = max_{j<n, λ} |W_{n,j}| / (τ^α (n−j)^{α−1})` with
/// `W_{n,j} = e_{α,α+1}(t_n − t_j, λ) − e_{α,α+1}(t_n − t_{j+1}, λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBoundReport<T> {
    /// `c_prime[n − 1]` for `n = 1..=N`, maximized over the λ grid.
    pub c_prime: Vec<T>,
    /// Same, one row per λ.
    pub per_lambda: Vec<Vec<T>>,
    /// `max C′ / min C′` over `n ∈ [first, N]`, overall and per λ.
    pub spread: T,
    pub spread_per_lambda: Vec<T>,
    pub first: usize,
    pub stable: bool,
}

pub const WEIGHT_BOUND_SPREAD: f64 = 1.05;

pub fn ei_weight_bound_check<T: Scalar>(
    alpha: T,
    tau: T,
    steps: usize,
    lambdas: &[T],
) -> Result<WeightBoundReport<T>, TimestepError> {
    let first = 10.min(steps);
    let kernels = KernelTable::new(alpha, tau, steps, lambdas)?;
    let scale = tau.powf(alpha);
    let per_lambda: Vec<Vec<T>> = (0..lambdas.len())
        .map(|l| {
            (1..=steps)
                .map(|n| {
                    (0..n).fold(T::zero(), |acc, j| {
                        let m = n - j;
                        let w = kernels.integrated[m][l] - kernels.integrated[m - 1][l];
                        acc.max(w.abs() / (scale * T::of_usize(m).powf(alpha - T::one())))
                    })
                })
                .collect()
        })
        .collect();
    let c_prime: Vec<T> = (0..steps)
        .map(|k| {
            per_lambda
                .iter()
                .fold(T::zero(), |acc, row| acc.max(row[k]))
        })
        .collect();
    let spread_of = |v: &[T]| {
        let w = &v[first.max(1) - 1..];
        let hi = w.iter().fold(T::zero(), |a, &b| a.max(b));
        let lo = w.iter().fold(T::infinity(), |a, &b| a.min(b));
        if lo > T::zero() {
            hi / lo
        } else {
            T::infinity()
        }
    };
    let spread = spread_of(&c_prime);
    let spread_per_lambda: Vec<T> = per_lambda.iter().map(|r| spread_of(r)).collect();
    let limit = T::of(WEIGHT_BOUND_SPREAD);
    let stable = spread <= limit && spread_per_lambda.iter().all(|&s| s <= limit);
    Ok(WeightBoundReport {
        c_prime,
        per_lambda,
        spread,
        spread_per_lambda,
        first,
        stable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mittag::ml;
    use crate::solver::generalized_eigen;
    use proptest::prelude::*;

    fn scalar(v: f64) -> SparseMatrix<f64> {
        SparseMatrix::from_dense(&[vec![v]])
    }

    struct Zero;
    impl Source<f64> for Zero {
        fn load(&self, _t: f64, _u: &[f64], out: &mut [f64]) {
            out.iter_mut().for_each(|x| *x = 0.0);
        }
        fn depends_on_state(&self) -> bool {
            false
        }
    }

    #[test]
    fn coefficient_examples() {
        let c = L1Coeffs::new(0.5, 0.1, 10).unwrap();
        assert_eq!(c.b(0), 1.0);
        assert!((c.b(1) - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        let c1 = L1Coeffs::<f64>::new(1.0, 0.1, 10).unwrap();
        assert!(c1.weights()[1..].iter().all(|&b| b == 0.0));
        assert!((c1.alpha0() - 0.1).abs() < 1e-15);
        assert!(L1Coeffs::new(0.0, 0.1, 3).is_err());
        assert!(L1Coeffs::new(1.2, 0.1, 3).is_err());
        assert!(L1Coeffs::new(0.5, -0.1, 3).is_err());
        assert!(L1Coeffs::new(0.5, 0.1, 0).is_err());
    }

    proptest! {
        #[test]
        fn b_positive_decreasing(alpha in 0.01f64..0.99, n in 2usize..300) {
            let c = L1Coeffs::new(alpha, 1e-3, n).unwrap();
            prop_assert_eq!(c.b(0), 1.0);
            for w in c.weights().windows(2) {
                prop_assert!(w[1] > 0.0 && w[1] < w[0]);
            }
            // telescoping: Σ_{j<n} b_j = n^{1−α}
            let s: f64 = c.weights()[..n].iter().sum();
            prop_assert!((s - (n as f64).powf(1.0 - alpha)).abs() < 1e-10 * s);
        }

        #[test]
        fn semilinear_cubic(u in -3.0f64..3.0, f in -2.0f64..2.0) {
            let v = semilinear_f(&[u], &[f])[0];
            prop_assert!((v - (u - u.powi(3) + f)).abs() <= 1e-12 * (1.0 + u.abs().powi(3)));
        }
    }

    #[test]
    fn semilinear_examples() {
        assert_eq!(
            semilinear_f(&[0.0, 1.0, 2.0], &[0.5, 0.0, 0.0]),
            vec![0.5, 0.0, -6.0]
        );
    }

    #[test]
    fn constant_state_without_forces() {
        let m = SparseMatrix::from_dense(&[vec![2.0, 0.5], vec![0.5, 1.0]]);
        let a = SparseMatrix::from_dense(&[vec![0.0, 0.0], vec![0.0, 0.0]]);
        let c = L1Coeffs::new(0.4, 0.01, 20).unwrap();
        let t =
            l1_implicit_solve(&m, &a, &Zero, &[1.0, -2.0], &c, PicardOptions::default()).unwrap();
        for u in &t.states {
            assert!((u[0] - 1.0).abs() < 1e-14 && (u[1] + 2.0).abs() < 1e-14);
        }
        let e =
            l1_explicit_solve(&m, &a, &ConstantSource(vec![0.3, 0.1]), &[1.0, -2.0], &c).unwrap();
        let i = l1_implicit_solve(
            &m,
            &a,
            &ConstantSource(vec![0.3, 0.1]),
            &[1.0, -2.0],
            &c,
            PicardOptions::default(),
        )
        .unwrap();
        for (x, y) in e.states.iter().zip(&i.states) {
            assert!((x[0] - y[0]).abs() < 1e-12 && (x[1] - y[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_one_is_euler() {
        let (lam, f, tau, n) = (3.0, 0.7, 0.05, 40);
        let c = L1Coeffs::new(1.0, tau, n).unwrap();
        let src = ConstantSource(vec![f]);
        let imp = l1_implicit_solve(
            &scalar(1.0),
            &scalar(lam),
            &src,
            &[1.0],
            &c,
            PicardOptions::default(),
        )
        .unwrap();
        let exp = l1_explicit_solve(&scalar(1.0), &scalar(lam), &src, &[1.0], &c).unwrap();
        let (mut be, mut fe) = (1.0, 1.0);
        for k in 1..=n {
            be = (be + tau * f) / (1.0 + tau * lam);
            fe = fe + tau * (f - lam * fe);
            assert!((imp.states[k][0] - be).abs() < 1e-12);
            assert!((exp.states[k][0] - fe).abs() < 1e-12);
        }
    }

    #[test]
    fn relaxation_error_decreases() {
        let alpha = 0.6;
        let exact = ml(&MLParams::new(alpha, 1.0).unwrap(), -1.0).unwrap();
        let mut last = f64::INFINITY;
        for n in [20, 40, 80, 160] {
            let c = L1Coeffs::new(alpha, 1.0 / n as f64, n).unwrap();
            let t = l1_implicit_solve(
                &scalar(1.0),
                &scalar(1.0),
                &Zero,
                &[1.0],
                &c,
                PicardOptions::default(),
            )
            .unwrap();
            let err = (t.last()[0] - exact).abs();
            assert!(err < last, "N = {n}: {err} !< {last}");
            last = err;
        }
    }

    #[test]
    fn picard_resolves_cubic_step() {
        let src = SemilinearSource {
            f0: vec![0.2],
            mass: scalar(1.0),
            fixed: vec![],
        };
        let c = L1Coeffs::new(0.7, 0.01, 5).unwrap();
        let t = l1_implicit_solve(
            &scalar(1.0),
            &scalar(2.0),
            &src,
            &[0.5],
            &c,
            PicardOptions::default(),
        )
        .unwrap();
        // each step satisfies the scheme with f evaluated at the new state
        let u1 = t.states[1][0];
        let resid = (1.0 + c.alpha0() * 2.0) * u1 - c.alpha0() * (0.2 + u1 - u1.powi(3)) - 0.5;
        assert!(resid.abs() < 1e-10);
        assert!(t.total_inner_iterations() > 0);
        let bad = SemilinearSource {
            f0: vec![0.0],
            mass: scalar(1.0),
            fixed: vec![],
        };
        let opts = PicardOptions {
            tol: 1e-14,
            max_iter: 1,
        };
        assert!(matches!(
            l1_implicit_solve(&scalar(1.0), &scalar(2.0), &bad, &[0.5], &c, opts),
            Err(TimestepError::Picard { step: 1, .. })
        ));
    }

    #[test]
    fn explicit_blow_up_is_flagged() {
        let c = L1Coeffs::new(0.3, 0.1, 200).unwrap();
        let t = l1_explicit_solve(&scalar(1.0), &scalar(1e4), &Zero, &[1.0], &c).unwrap();
        let first = t.first_nonfinite().expect("blows up");
        assert!(first < 200);
        assert!(t.finite[first..].iter().all(|&f| !f));
        assert!(t.states[200][0].is_nan());
    }

    fn seeded_pair(seed: u64) -> (SparseMatrix<f64>, SparseMatrix<f64>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut gen = |shift: f64| {
            let b: Vec<Vec<f64>> = (0..5)
                .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let mut s = vec![vec![0.0; 5]; 5];
            for i in 0..5 {
                for j in 0..5 {
                    s[i][j] = (0..5).map(|k| b[i][k] * b[j][k]).sum::<f64>()
                        + if i == j { shift } else { 0.0 };
                }
            }
            SparseMatrix::from_dense(&s)
        };
        let a = gen(0.5);
        let m = gen(1.0);
        (a, m)
    }

    #[test]
    fn ei_homogeneous_and_constant_source() {
        let (a, m) = seeded_pair(11);
        let eig = generalized_eigen(&a, &m).unwrap();
        let u0 = [1.0, -0.5, 0.25, 2.0, 0.0];
        let (alpha, tau, n) = (0.6, 0.05, 20);
        let t = ei_solve(&eig, &Zero, &u0, alpha, tau, n).unwrap();
        let p1 = MLParams::new(alpha, 1.0).unwrap();
        let c0 = eig.project(&u0);
        for k in [1, 7, 20] {
            let tk = k as f64 * tau;
            let coef: Vec<f64> = c0
                .iter()
                .zip(&eig.values)
                .map(|(c, &l)| e_ab(&p1, tk, l).unwrap() * c)
                .collect();
            let want = eig.reconstruct(&coef);
            for (x, y) in t.states[k].iter().zip(&want) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
        assert_eq!(t.total_inner_iterations(), 0);
        // norm of modal coordinates decreases (complete monotonicity)
        for w in t.states.windows(2) {
            let (p, q) = (eig.project(&w[0]), eig.project(&w[1]));
            for i in 0..5 {
                assert!(q[i].abs() <= p[i].abs() + 1e-15);
            }
        }
    }

    #[test]
    fn ei_alpha_one_scalar_matches_exponential_euler() {
        let lam = 4.0;
        let eig = generalized_eigen(&scalar(lam), &scalar(1.0)).unwrap();
        let f = 1.5;
        let t = ei_solve(&eig, &ConstantSource(vec![f]), &[1.0], 1.0, 0.1, 10).unwrap();
        for (k, u) in t.states.iter().enumerate() {
            let tk = k as f64 * 0.1;
            let exact = (-lam * tk).exp() + f * (1.0 - (-lam * tk).exp()) / lam;
            assert!((u[0] - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_bound_lambda_zero_closed_form() {
        let (alpha, tau) = (0.6, 1e-5);
        let k = KernelTable::new(alpha, tau, 10, &[0.0, 5.0]).unwrap();
        let g = gamma(alpha + 1.0);
        for m in 1..=10 {
            let w = k.integrated[m][0] - k.integrated[m - 1][0];
            let want = ((m as f64 * tau).powf(alpha) - ((m - 1) as f64 * tau).powf(alpha)) / g;
            assert!((w - want).abs() < 1e-12 * want);
        }
        // telescoping
        let s: f64 = (1..=10)
            .map(|m| k.integrated[m][1] - k.integrated[m - 1][1])
            .sum();
        assert!((s - k.integrated[10][1]).abs() < 1e-15);
        let r = ei_weight_bound_check(alpha, tau, 100, &[0.0, 1.0, 1e3, 1e6]).unwrap();
        assert!(r.stable, "{:?}", r.spread_per_lambda);
    }

    #[test]
    fn single_precision_pipeline() {
        use crate::fem::{assemble_mass, assemble_stiffness, interpolate};
        use crate::grid::{FineGrid, PermeabilityField};
        let grid = FineGrid::new(6).unwrap();
        let keep = grid.interior_nodes();
        fn solve<T: Scalar>(grid: &FineGrid, keep: &[usize]) -> (Vec<f64>, Vec<f64>) {
            let kappa = PermeabilityField::<T>::constant(grid, T::one()).unwrap();
            let a = assemble_stiffness(grid, &kappa)
                .unwrap()
                .principal_submatrix(keep);
            let m = assemble_mass::<T>(grid, None)
                .unwrap()
                .principal_submatrix(keep);
            let full = interpolate(grid, |x, y| T::of(x * (1.0 - x) * y * (1.0 - y)));
            let u0: Vec<T> = keep.iter().map(|&p| full[p]).collect();
            let src = ConstantSource(vec![T::of(1e-3); keep.len()]);
            let c = L1Coeffs::new(T::of(0.6), T::of(1e-3), 10).unwrap();
            let l1 = l1_implicit_solve(&m, &a, &src, &u0, &c, PicardOptions::default()).unwrap();
            let eig = crate::solver::generalized_eigen(&a, &m).unwrap();
            let ei = ei_solve(&eig, &src, &u0, T::of(0.6), T::of(1e-3), 10).unwrap();
            let f = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect();
            (f(l1.last()), f(ei.last()))
        }
        let (l1_64, ei_64) = solve::<f64>(&grid, &keep);
        let (l1_32, ei_32) = solve::<f32>(&grid, &keep);
        for (x, y) in l1_32.iter().zip(&l1_64).chain(ei_32.iter().zip(&ei_64)) {
            assert!((x - y).abs() <= 1e-5 * (1.0 + y.abs()), "{x} vs {y}");
        }
    }
}
