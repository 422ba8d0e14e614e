use super::SolverError;
use crate::fem::SparseMatrix;
use crate::scalar::dot;
use crate::Scalar;

/// Profile (envelope) Cholesky factorization `A = L Lᵀ`.
///
/// Grid matrices in lexicographic node order have a profile of width
/// `n + 2`, so the factor costs `O(N n²)` and stays in memory for repeated
/// solves.
#[derive(Debug, Clone)]
pub struct SkylineCholesky<T> {
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<T>,
    pinned: Vec<(usize, T)>,
}

impl<T: Scalar> SkylineCholesky<T> {
    /// Factorization of an SPD matrix.
    pub fn factor(a: &SparseMatrix<T>) -> Result<Self, SolverError> {
        Self::build(a, None)
    }

    /// Factorization of a symmetric positive semidefinite matrix: a pivot
    /// below `rel_tol · max_k a_kk` is replaced by `a_ii`, i.e. the factor is
    /// of `A + Σ σ_p e_p e_pᵀ` over the returned pins. The threshold uses the
    /// largest diagonal because, under high contrast, the roundoff left in a
    /// null pivot scales with the stiff part of the matrix, not with the
    /// (possibly tiny) diagonal of the node it lands on.
    pub fn factor_pinned(a: &SparseMatrix<T>, rel_tol: T) -> Result<Self, SolverError> {
        Self::build(a, Some(rel_tol))
    }

    fn build(a: &SparseMatrix<T>, pin_tol: Option<T>) -> Result<Self, SolverError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(SolverError::DimensionMismatch {
                expected: n,
                got: a.ncols(),
            });
        }
        let mut first = vec![0usize; n];
        for (i, f) in first.iter_mut().enumerate() {
            *f = a
                .row(i)
                .map(|(j, _)| j)
                .filter(|&j| j <= i)
                .min()
                .unwrap_or(i);
        }
        // symmetric envelope: a_ji ≠ 0 with j < i also widens row i
        for i in 0..n {
            for (j, _) in a.row(i) {
                if j > i && first[j] > i {
                    first[j] = i;
                }
            }
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut data = vec![T::zero(); start[n]];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    data[start[i] + j - first[i]] = v;
                }
            }
        }
        let amax = (0..n)
            .map(|i| data[start[i + 1] - 1].abs())
            .fold(T::zero(), |m, v| if v > m { v } else { m });
        let mut pinned = Vec::new();
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let s = {
                    let li = &data[start[i] + k0 - fi..start[i] + j - fi];
                    let lj = &data[start[j] + k0 - fj..start[j] + j - fj];
                    dot(li, lj)
                };
                let idx = start[i] + j - fi;
                data[idx] = (data[idx] - s) / data[start[j + 1] - 1];
            }
            let row = &data[start[i]..start[i + 1] - 1];
            let aii = data[start[i + 1] - 1];
            let mut d = aii - dot(row, row);
            match pin_tol {
                Some(tol) if !(d > tol * amax) => {
                    let sigma = if aii > T::zero() { aii } else { T::one() };
                    d = d + sigma;
                    pinned.push((i, sigma));
                    if !(d > T::zero()) {
                        return Err(SolverError::NotPositiveDefinite { index: i });
                    }
                }
                _ => {
                    if !(d > T::zero()) {
                        return Err(SolverError::NotPositiveDefinite { index: i });
                    }
                }
            }
            data[start[i + 1] - 1] = d.sqrt();
        }
        Ok(Self {
            first,
            start,
            data,
            pinned,
        })
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    /// `(index, σ)` of every pinned pivot.
    pub fn pinned(&self) -> &[(usize, T)] {
        &self.pinned
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [T]) {
        let n = self.dim();
        assert_eq!(x.len(), n);
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1] - 1];
            let s = dot(row, &x[fi..i]);
            x[i] = (x[i] - s) / self.data[self.start[i + 1] - 1];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            x[i] = x[i] / self.data[self.start[i + 1] - 1];
            let xi = x[i];
            let row = &self.data[self.start[i]..self.start[i + 1] - 1];
            for (k, &l) in row.iter().enumerate() {
                x[fi + k] = x[fi + k] - l * xi;
            }
        }
    }
}
