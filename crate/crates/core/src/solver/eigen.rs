use super::{DenseCholesky, DenseMatrix, SolverError};
use crate::fem::SparseMatrix;
use crate::Scalar;

/// `A Q = M Q Λ` with `Qᵀ M Q = I` and ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct Eigendecomposition<T> {
    pub values: Vec<T>,
    /// Eigenvectors as columns.
    pub vectors: DenseMatrix<T>,
    mass: SparseMatrix<T>,
}

impl<T: Scalar> Eigendecomposition<T> {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn mass(&self) -> &SparseMatrix<T> {
        &self.mass
    }

    /// Modal coordinates `Qᵀ M v`.
    pub fn project(&self, v: &[T]) -> Vec<T> {
        self.project_load(&self.mass.mul_vec(v))
    }

    /// `Qᵀ b` for a load vector `b` (already integrated against the basis).
    pub fn project_load(&self, b: &[T]) -> Vec<T> {
        self.vectors.mul_transpose_vec(b)
    }

    /// `Q c`.
    pub fn reconstruct(&self, c: &[T]) -> Vec<T> {
        self.vectors.mul_vec(c)
    }

    /// `Q g(Λ) Qᵀ M v`.
    pub fn apply_matrix_function<G: Fn(T) -> T>(&self, g: G, v: &[T]) -> Vec<T> {
        let c: Vec<T> = self
            .project(v)
            .iter()
            .zip(&self.values)
            .map(|(&ci, &l)| g(l) * ci)
            .collect();
        self.reconstruct(&c)
    }
}

/// Generalized symmetric-definite eigenproblem for sparse `A` (symmetric,
/// positive semidefinite) and `M` (SPD), by reduction to standard form with
/// the Cholesky factor of `M`.
pub fn generalized_eigen<T: Scalar>(
    a: &SparseMatrix<T>,
    m: &SparseMatrix<T>,
) -> Result<Eigendecomposition<T>, SolverError> {
    let n = a.nrows();
    if a.ncols() != n || m.nrows() != n || m.ncols() != n {
        return Err(SolverError::DimensionMismatch {
            expected: n,
            got: m.nrows(),
        });
    }
    for mat in [a, m] {
        let asym = mat.asymmetry();
        if asym > T::of(1e-10) {
            return Err(SolverError::NotSymmetric {
                asymmetry: asym.to_f64_lossy(),
            });
        }
    }
    let chol = DenseCholesky::new(&DenseMatrix::from_sparse(m))?;
    // X = L⁻¹ A (column by column), then C = L⁻¹ Xᵀ
    let ad = DenseMatrix::from_sparse(a);
    let mut x = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let col = chol.solve_lower(&ad.column(j));
        for i in 0..n {
            x[(i, j)] = col[i];
        }
    }
    let mut c = DenseMatrix::zeros(n, n);
    for j in 0..n {
        // column j of Xᵀ is row j of X
        let col = chol.solve_lower(x.row(j));
        for i in 0..n {
            c[(i, j)] = col[i];
        }
    }
    for i in 0..n {
        for j in 0..i {
            let v = (c[(i, j)] + c[(j, i)]) * T::of(0.5);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    let (mut values, v) = symmetric_eigen(&c)?;
    let scale = values.iter().fold(T::zero(), |s, l| s.max(l.abs()));
    for l in values.iter_mut() {
        if *l < T::zero() {
            if -*l <= T::of(1e-10) * scale.max(T::min_positive_value()) {
                *l = T::zero();
            } else {
                return Err(SolverError::Indefinite {
                    value: l.to_f64_lossy(),
                });
            }
        }
    }
    let mut q = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let col = chol.solve_upper(&v.column(j));
        for i in 0..n {
            q[(i, j)] = col[i];
        }
    }
    Ok(Eigendecomposition {
        values,
        vectors: q,
        mass: m.clone(),
    })
}

/// Symmetric eigendecomposition by Householder tridiagonalization and the
/// implicit QL algorithm. Returns ascending eigenvalues and orthonormal
/// eigenvectors as columns.
pub fn symmetric_eigen<T: Scalar>(
    a: &DenseMatrix<T>,
) -> Result<(Vec<T>, DenseMatrix<T>), SolverError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(SolverError::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    if n == 0 {
        return Ok((Vec::new(), DenseMatrix::zeros(0, 0)));
    }
    if a.asymmetry() > T::of(1e-10) {
        return Err(SolverError::NotSymmetric {
            asymmetry: a.asymmetry().to_f64_lossy(),
        });
    }
    if !a.to_rows().iter().flatten().all(|v| v.is_finite()) {
        return Err(SolverError::NonFinite);
    }
    let mut v = a.to_rows();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tred2(&mut v, &mut d, &mut e);
    // QL rotations act on columns of V; work on the transpose for contiguous rows
    let mut vt = DenseMatrix::from_rows(&v).transpose();
    tql2(&mut vt, &mut d, &mut e)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).unwrap_or(std::cmp::Ordering::Equal));
    let values: Vec<T> = order.iter().map(|&i| d[i]).collect();
    let mut vecs = DenseMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        for i in 0..n {
            vecs[(i, col)] = vt[(k, i)];
        }
    }
    Ok((values, vecs))
}

fn tred2<T: Scalar>(v: &mut [Vec<T>], d: &mut [T], e: &mut [T]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[n - 1][j];
    }
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for dk in d.iter().take(i) {
            scale = scale + dk.abs();
        }
        if scale.is_zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[i - 1][j];
                v[i][j] = T::zero();
                v[j][i] = T::zero();
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk = *dk / scale;
                h = h + *dk * *dk;
            }
            let f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h = h - f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = T::zero();
            }
            for j in 0..i {
                let f = d[j];
                v[j][i] = f;
                let mut g = e[j] + v[j][j] * f;
                for k in j + 1..i {
                    g = g + v[k][j] * d[k];
                    e[k] = e[k] + v[k][j] * f;
                }
                e[j] = g;
            }
            let mut f = T::zero();
            for j in 0..i {
                e[j] = e[j] / h;
                f = f + e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] = e[j] - hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                for k in j..i {
                    v[k][j] = v[k][j] - (f * e[k] + g * d[k]);
                }
                d[j] = v[i - 1][j];
                v[i][j] = T::zero();
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[n - 1][i] = v[i][i];
        v[i][i] = T::one();
        let h = d[i + 1];
        if !h.is_zero() {
            for k in 0..=i {
                d[k] = v[k][i + 1] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g = g + v[k][i + 1] * v[k][j];
                }
                for k in 0..=i {
                    v[k][j] = v[k][j] - g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[k][i + 1] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v[n - 1][j];
        v[n - 1][j] = T::zero();
    }
    v[n - 1][n - 1] = T::one();
    e[0] = T::zero();
}

/// `vt` holds the transposed accumulated transform (row `i` is column `i`).
fn tql2<T: Scalar>(vt: &mut DenseMatrix<T>, d: &mut [T], e: &mut [T]) -> Result<(), SolverError> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();
    let mut f = T::zero();
    let mut tst1 = T::zero();
    let eps = T::epsilon();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(SolverError::NoConvergence {
                        iterations: iter,
                        residual: e[l].abs().to_f64_lossy(),
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (T::of(2.0) * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di = *di - h;
                }
                f = f + h;
                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let hk = vt[(i + 1, k)];
                        let vik = vt[(i, k)];
                        vt[(i + 1, k)] = s * vik + c * hk;
                        vt[(i, k)] = c * vik - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] = d[l] + f;
        e[l] = T::zero();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_spd(n: usize, seed: u64) -> DenseMatrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let b = DenseMatrix::from_rows(&b);
        let mut a = b.matmul(&b.transpose());
        for i in 0..n {
            a[(i, i)] += 0.1;
        }
        a
    }

    #[test]
    fn known_spectrum() {
        // 1D Dirichlet Laplacian tridiag(-1, 2, -1): λ_k = 2 − 2cos(kπ/(n+1))
        let n = 12;
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = 2.0;
            if i + 1 < n {
                a[(i, i + 1)] = -1.0;
                a[(i + 1, i)] = -1.0;
            }
        }
        let (vals, _) = symmetric_eigen(&a).unwrap();
        for (k, l) in vals.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((l - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn generalized_reconstruction() {
        let a = random_spd(9, 1);
        let m = random_spd(9, 2);
        let (sa, sm) = (
            SparseMatrix::from_dense(&a.to_rows()),
            SparseMatrix::from_dense(&m.to_rows()),
        );
        let eig = generalized_eigen(&sa, &sm).unwrap();
        let q = &eig.vectors;
        let qtmq = q.transpose().matmul(&m).matmul(q);
        let qtaq = q.transpose().matmul(&a).matmul(q);
        for i in 0..9 {
            for j in 0..9 {
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((qtmq[(i, j)] - id).abs() < 1e-10);
                let lam = if i == j { eig.values[i] } else { 0.0 };
                assert!((qtaq[(i, j)] - lam).abs() < 1e-9 * eig.values[8]);
            }
        }
        let v: Vec<f64> = (0..9).map(|i| i as f64 - 4.0).collect();
        let back = eig.apply_matrix_function(|_| 1.0, &v);
        for (x, y) in back.iter().zip(&v) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let ns = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]);
        assert!(matches!(
            symmetric_eigen(&ns),
            Err(SolverError::NotSymmetric { .. })
        ));
        let a = SparseMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, -1.0]]);
        let m = SparseMatrix::<f64>::identity(2);
        assert!(matches!(
            generalized_eigen(&a, &m),
            Err(SolverError::Indefinite { .. })
        ));
        assert!(generalized_eigen(&m, &a).is_err());
    }

    #[test]
    fn tiny_negative_eigenvalues_are_clamped() {
        let a = SparseMatrix::<f64>::from_dense(&[vec![1.0, -1.0], vec![-1.0, 1.0]]);
        let eig = generalized_eigen(&a, &SparseMatrix::identity(2)).unwrap();
        assert_eq!(eig.values[0], 0.0);
        assert!((eig.values[1] - 2.0).abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn eigenpairs_satisfy_definition(seed in 0u64..10_000, n in 1usize..14) {
            let a = random_spd(n, seed);
            let (vals, vecs) = symmetric_eigen(&a).unwrap();
            for w in vals.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
            let scale = vals[n - 1].abs().max(1.0);
            for k in 0..n {
                let v = vecs.column(k);
                let av = a.mul_vec(&v);
                for i in 0..n {
                    prop_assert!((av[i] - vals[k] * v[i]).abs() < 1e-11 * scale);
                }
                let nv: f64 = v.iter().map(|x| x * x).sum();
                prop_assert!((nv - 1.0).abs() < 1e-12);
            }
        }
    }
}
