use super::{DenseMatrix, SkylineCholesky, SolverError};
use crate::fem::SparseMatrix;
use crate::Scalar;

/// Factored saddle point system
///
/// ```text
///   [ E  Cᵀ ] [x]   [f]
///   [ C  0  ] [d] = [g]
/// ```
///
/// with `E` symmetric positive semidefinite and positive definite on the
/// kernel of `C`. `E` is factored with pinned pivots, `E_s = E + U Uᵀ`; the
/// pins are carried as extra multipliers so that the small dense system on
/// `[C; Uᵀ]` restores the exact `E`.
#[derive(Debug, Clone)]
pub struct KktSolver<T> {
    factor: SkylineCholesky<T>,
    c: SparseMatrix<T>,
    pins: Vec<(usize, T)>,
    /// `E_s⁻¹ Bᵀ`, one column per constraint or pin.
    y: Vec<Vec<T>>,
    schur_inv: DenseMatrix<T>,
}

const PIN_TOL: f64 = 1e-9;

impl<T: Scalar> KktSolver<T> {
    pub fn new(e: &SparseMatrix<T>, c: &SparseMatrix<T>) -> Result<Self, SolverError> {
        let n = e.nrows();
        if e.ncols() != n {
            return Err(SolverError::DimensionMismatch {
                expected: n,
                got: e.ncols(),
            });
        }
        if c.ncols() != n {
            return Err(SolverError::DimensionMismatch {
                expected: n,
                got: c.ncols(),
            });
        }
        let asym = e.asymmetry();
        if asym > T::of(1e-12) {
            return Err(SolverError::NotSymmetric {
                asymmetry: asym.to_f64_lossy(),
            });
        }
        let factor = SkylineCholesky::factor_pinned(e, T::of(PIN_TOL))?;
        let pins: Vec<(usize, T)> = factor.pinned().to_vec();
        let m = c.nrows();
        let mut y = Vec::with_capacity(m + pins.len());
        for r in 0..m {
            let mut col = vec![T::zero(); n];
            for (j, v) in c.row(r) {
                col[j] = v;
            }
            factor.solve_in_place(&mut col);
            y.push(col);
        }
        for &(p, sigma) in &pins {
            let mut col = vec![T::zero(); n];
            col[p] = sigma.sqrt();
            factor.solve_in_place(&mut col);
            y.push(col);
        }
        let k = y.len();
        let mut s = DenseMatrix::zeros(k, k);
        for (a, ya) in y.iter().enumerate() {
            let bya = b_times(c, &pins, ya);
            for (b, v) in bya.into_iter().enumerate() {
                s[(b, a)] = v;
            }
        }
        for q in m..k {
            s[(q, q)] = s[(q, q)] - T::one();
        }
        // symmetrize against round-off
        for a in 0..k {
            for b in 0..a {
                let v = (s[(a, b)] + s[(b, a)]) * T::of(0.5);
                s[(a, b)] = v;
                s[(b, a)] = v;
            }
        }
        // symmetric Ruiz equilibration: constraint rows of the two continua
        // differ in scale by the contrast, which would otherwise swamp the
        // dependency test of the pivoting LU
        let mut d = vec![T::one(); k];
        for _ in 0..4 {
            for a in 0..k {
                let r = (0..k).fold(T::zero(), |m, b| m.max((s[(a, b)] * d[a] * d[b]).abs()));
                if r > T::zero() {
                    d[a] = d[a] / r.sqrt();
                }
            }
        }
        let mut scaled = s.clone();
        for a in 0..k {
            for b in 0..k {
                scaled[(a, b)] = s[(a, b)] * d[a] * d[b];
            }
        }
        let ident: Vec<Vec<T>> = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| if i == j { T::one() } else { T::zero() })
                    .collect()
            })
            .collect();
        let cols = scaled.solve_many(&ident)?;
        let mut schur_inv = DenseMatrix::zeros(k, k);
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                schur_inv[(i, j)] = d[i] * v * d[j];
            }
        }
        Ok(Self {
            factor,
            c: c.clone(),
            pins,
            y,
            schur_inv,
        })
    }

    pub fn constraint_count(&self) -> usize {
        self.c.nrows()
    }

    /// Returns `(x, d)`.
    pub fn solve(&self, f: &[T], g: &[T]) -> Result<(Vec<T>, Vec<T>), SolverError> {
        let n = self.factor.dim();
        let m = self.c.nrows();
        if f.len() != n {
            return Err(SolverError::DimensionMismatch {
                expected: n,
                got: f.len(),
            });
        }
        if g.len() != m {
            return Err(SolverError::DimensionMismatch {
                expected: m,
                got: g.len(),
            });
        }
        let x0 = self.factor.solve(f);
        let mut rhs = b_times(&self.c, &self.pins, &x0);
        for (r, gi) in rhs.iter_mut().zip(g) {
            *r = *r - *gi;
        }
        let w = self.schur_inv.mul_vec(&rhs);
        let mut x = x0;
        for (yk, &wk) in self.y.iter().zip(&w) {
            crate::scalar::axpy(-wk, yk, &mut x);
        }
        Ok((x, w[..m].to_vec()))
    }
}

/// `[C; Uᵀ] v`.
fn b_times<T: Scalar>(c: &SparseMatrix<T>, pins: &[(usize, T)], v: &[T]) -> Vec<T> {
    let mut out = c.mul_vec(v);
    out.extend(pins.iter().map(|&(p, s)| s.sqrt() * v[p]));
    out
}

/// One-shot solve of the saddle point system; see [`KktSolver`].
pub fn solve_constrained<T: Scalar>(
    e: &SparseMatrix<T>,
    c: &SparseMatrix<T>,
    f: &[T],
    g: &[T],
) -> Result<(Vec<T>, Vec<T>), SolverError> {
    KktSolver::new(e, c)?.solve(f, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble_stiffness;
    use crate::grid::{FineGrid, PermeabilityField};

    fn dense_kkt(e: &SparseMatrix<f64>, c: &SparseMatrix<f64>, f: &[f64], g: &[f64]) -> Vec<f64> {
        let (n, m) = (e.nrows(), c.nrows());
        let mut k = DenseMatrix::zeros(n + m, n + m);
        for (i, j, v) in e.triplets() {
            k[(i, j)] = v;
        }
        for (i, j, v) in c.triplets() {
            k[(n + i, j)] = v;
            k[(j, n + i)] = v;
        }
        let mut rhs = f.to_vec();
        rhs.extend_from_slice(g);
        k.solve(&rhs).unwrap()
    }

    #[test]
    fn neumann_with_mean_constraints_matches_dense() {
        let g = FineGrid::new(5).unwrap();
        let k = PermeabilityField::from_values(
            (0..25)
                .map(|c| if c == 12 { 1e-5 } else { 1.0 + c as f64 * 0.1 })
                .collect(),
        )
        .unwrap();
        let e = assemble_stiffness(&g, &k).unwrap();
        let n = g.node_count();
        let c = SparseMatrix::from_triplets(
            2,
            n,
            &(0..n)
                .map(|p| (usize::from(p % 2 == 0), p, 0.1 + p as f64 * 0.01))
                .collect::<Vec<_>>(),
        );
        let f: Vec<f64> = (0..n).map(|p| ((p * 7) % 5) as f64 - 2.0).collect();
        let gv = [0.3, -0.2];
        let solver = KktSolver::new(&e, &c).unwrap();
        let (x, d) = solver.solve(&f, &gv).unwrap();
        let want = dense_kkt(&e, &c, &f, &gv);
        for i in 0..n {
            assert!(
                (x[i] - want[i]).abs() < 1e-10,
                "{i}: {} vs {}",
                x[i],
                want[i]
            );
        }
        for i in 0..2 {
            assert!((d[i] - want[n + i]).abs() < 1e-10);
        }
        let cx = c.mul_vec(&x);
        assert!((cx[0] - 0.3).abs() < 1e-12 && (cx[1] + 0.2).abs() < 1e-12);
    }

    #[test]
    fn dependent_rows_are_reported() {
        let g = FineGrid::new(3).unwrap();
        let e = assemble_stiffness(&g, &PermeabilityField::constant(&g, 1.0).unwrap()).unwrap();
        let n = g.node_count();
        let mut t: Vec<_> = (0..n).map(|p| (0, p, 1.0)).collect();
        t.extend((0..n).map(|p| (1, p, 2.0)));
        let c = SparseMatrix::from_triplets(2, n, &t);
        assert!(matches!(
            KktSolver::new(&e, &c),
            Err(SolverError::DependentConstraint { .. })
        ));
    }

    #[test]
    fn rejects_nonsymmetric() {
        let e = SparseMatrix::from_dense(&[vec![2.0, 1.0], vec![0.0, 2.0]]);
        let c = SparseMatrix::from_dense(&[vec![1.0, 1.0]]);
        assert!(matches!(
            KktSolver::new(&e, &c),
            Err(SolverError::NotSymmetric { .. })
        ));
    }
}
