use std::ops::{Index, IndexMut};

use super::SolverError;
use crate::fem::SparseMatrix;
use crate::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    nrows: usize,
    ncols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![T::zero(); nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            assert_eq!(r.len(), ncols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { nrows, ncols, data }
    }

    pub fn from_sparse(a: &SparseMatrix<T>) -> Self {
        let mut m = Self::zeros(a.nrows(), a.ncols());
        for (i, j, v) in a.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.nrows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.nrows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.ncols, self.nrows);
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| crate::scalar::dot(self.row(i), x))
            .collect()
    }

    /// `selfᵀ x`.
    pub fn mul_transpose_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![T::zero(); self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            crate::scalar::axpy(xi, self.row(i), &mut y);
        }
        y
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut out = Self::zeros(self.nrows, other.ncols);
        for i in 0..self.nrows {
            for k in 0..self.ncols {
                let a = self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                let (src, dst) = (
                    other.row(k),
                    &mut out.data[i * other.ncols..(i + 1) * other.ncols],
                );
                crate::scalar::axpy(a, src, dst);
            }
        }
        out
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn asymmetry(&self) -> T {
        if self.nrows != self.ncols {
            return T::infinity();
        }
        let mut worst = T::zero();
        for i in 0..self.nrows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        let s = self.max_abs();
        if s > T::zero() {
            worst / s
        } else {
            worst
        }
    }

    pub fn cholesky(&self) -> Result<DenseCholesky<T>, SolverError> {
        DenseCholesky::new(self)
    }

    /// Gaussian elimination with complete pivoting. A vanishing pivot is
    /// reported with the original row index that could not be eliminated.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>, SolverError> {
        Ok(self.solve_many(&[b.to_vec()])?.pop().unwrap_or_default())
    }

    pub fn solve_many(&self, rhs: &[Vec<T>]) -> Result<Vec<Vec<T>>, SolverError> {
        let n = self.nrows;
        if self.ncols != n {
            return Err(SolverError::DimensionMismatch {
                expected: n,
                got: self.ncols,
            });
        }
        let mut a = self.clone();
        let mut b: Vec<Vec<T>> = rhs.to_vec();
        let mut rperm: Vec<usize> = (0..n).collect();
        let mut cperm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs();
        let tol = scale * T::epsilon() * T::of_usize(n.max(1)) * T::of(16.0);
        for k in 0..n {
            let (mut pi, mut pj, mut best) = (k, k, T::zero());
            for i in k..n {
                for j in k..n {
                    let v = a[(i, j)].abs();
                    if v > best {
                        best = v;
                        pi = i;
                        pj = j;
                    }
                }
            }
            if best <= tol || scale.is_zero() {
                return Err(SolverError::DependentConstraint { row: rperm[k] });
            }
            if pi != k {
                for j in 0..n {
                    a.data.swap(k * n + j, pi * n + j);
                }
                for bb in b.iter_mut() {
                    bb.swap(k, pi);
                }
                rperm.swap(k, pi);
            }
            if pj != k {
                for i in 0..n {
                    a.data.swap(i * n + k, i * n + pj);
                }
                cperm.swap(k, pj);
            }
            let p = a[(k, k)];
            for i in k + 1..n {
                let f = a[(i, k)] / p;
                if f.is_zero() {
                    continue;
                }
                for j in k..n {
                    let v = a[(k, j)];
                    a[(i, j)] = a[(i, j)] - f * v;
                }
                for bb in b.iter_mut() {
                    bb[i] = bb[i] - f * bb[k];
                }
            }
        }
        let mut out = Vec::with_capacity(b.len());
        for bb in b {
            let mut y = vec![T::zero(); n];
            for i in (0..n).rev() {
                let mut s = bb[i];
                for j in i + 1..n {
                    s = s - a[(i, j)] * y[j];
                }
                y[i] = s / a[(i, i)];
            }
            let mut x = vec![T::zero(); n];
            for (k, &c) in cperm.iter().enumerate() {
                x[c] = y[k];
            }
            out.push(x);
        }
        Ok(out)
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.ncols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.ncols + j]
    }
}

/// `A = L Lᵀ` for a dense SPD matrix.
#[derive(Debug, Clone)]
pub struct DenseCholesky<T> {
    l: DenseMatrix<T>,
}

impl<T: Scalar> DenseCholesky<T> {
    pub fn new(a: &DenseMatrix<T>) -> Result<Self, SolverError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(SolverError::DimensionMismatch {
                expected: n,
                got: a.ncols(),
            });
        }
        let mut l = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let s = a[(i, j)] - crate::scalar::dot(&l.row(i)[..j], &l.row(j)[..j]);
                if i == j {
                    if !(s > T::zero()) {
                        return Err(SolverError::NotPositiveDefinite { index: i });
                    }
                    l[(i, i)] = s.sqrt();
                } else {
                    l[(i, j)] = s / l[(j, j)];
                }
            }
        }
        Ok(Self { l })
    }

    pub fn factor(&self) -> &DenseMatrix<T> {
        &self.l
    }

    /// `L y = b`.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = b.len();
        let mut y = b.to_vec();
        for i in 0..n {
            let s = y[i] - crate::scalar::dot(&self.l.row(i)[..i], &y[..i]);
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// `Lᵀ x = y`.
    pub fn solve_upper(&self, y: &[T]) -> Vec<T> {
        let n = y.len();
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            x[i] = x[i] / self.l[(i, i)];
            let xi = x[i];
            let row = self.l.row(i);
            for k in 0..i {
                x[k] = x[k] - row[k] * xi;
            }
        }
        x
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_upper(&self.solve_lower(b))
    }
}
