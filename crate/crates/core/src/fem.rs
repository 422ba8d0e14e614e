//! Bilinear finite elements on the fine grid.
//!
//! Conductivity is constant per cell, so element stiffness and mass matrices
//! are integrated exactly; loads use 2×2 Gauss quadrature per cell.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::grid::{CellRect, FineGrid, PermeabilityField};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("size mismatch: expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Compressed sparse row matrix. Assembly produces structurally symmetric
/// square matrices; rectangular instances hold constraint rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseMatrix<T> {
    /// Builds from triplets; duplicates are summed in input order, so equal
    /// triplet sequences give bit-identical matrices.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        // stable bucket by row, then sort each row by column keeping input order
        let mut order = vec![0usize; triplets.len()];
        let mut next = counts.clone();
        for (k, &(i, _, _)) in triplets.iter().enumerate() {
            order[next[i]] = k;
            next[i] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..nrows {
            let row = &mut order[counts[i]..counts[i + 1]];
            row.sort_by_key(|&k| triplets[k].1);
            let mut last = usize::MAX;
            for &k in row.iter() {
                let (_, j, v) = triplets[k];
                if j == last {
                    let end = values.len() - 1;
                    values[end] = values[end] + v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                    last = j;
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn from_diagonal(d: &[T]) -> Self {
        let n = d.len();
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: d.to_vec(),
        }
    }

    pub fn from_dense(rows: &[Vec<T>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let trip: Vec<_> = rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| !v.is_zero())
                    .map(move |(j, &v)| (i, j, v))
            })
            .collect();
        Self::from_triplets(nrows, ncols, &trip)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Dimension of a square matrix.
    pub fn dim(&self) -> usize {
        debug_assert_eq!(self.nrows, self.ncols);
        self.nrows
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.nrows.min(self.ncols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        (0..self.nrows)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .collect()
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.ncols);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).fold(T::zero(), |acc, (j, v)| acc + v * x[j]);
        }
    }

    /// `Aᵀ x`.
    pub fn mul_transpose_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![T::zero(); self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                y[j] = y[j] + v * xi;
            }
        }
        y
    }

    /// `xᵀ A x`.
    pub fn quad_form(&self, x: &[T]) -> T {
        self.bilinear(x, x)
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[T], y: &[T]) -> T {
        (0..self.nrows).fold(T::zero(), |acc, i| {
            acc + x[i] * self.row(i).fold(T::zero(), |s, (j, v)| s + v * y[j])
        })
    }

    pub fn scaled(&self, c: T) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = *v * c);
        out
    }

    /// `a·self + b·other`.
    pub fn linear_combination(&self, a: T, other: &Self, b: T) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut trip: Vec<_> = self
            .triplets()
            .into_iter()
            .map(|(i, j, v)| (i, j, a * v))
            .collect();
        trip.extend(other.triplets().into_iter().map(|(i, j, v)| (i, j, b * v)));
        Self::from_triplets(self.nrows, self.ncols, &trip)
    }

    pub fn transpose(&self) -> Self {
        let trip: Vec<_> = self
            .triplets()
            .into_iter()
            .map(|(i, j, v)| (j, i, v))
            .collect();
        Self::from_triplets(self.ncols, self.nrows, &trip)
    }

    /// Rows and columns restricted to `keep` (in the given order).
    pub fn principal_submatrix(&self, keep: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.ncols];
        for (k, &i) in keep.iter().enumerate() {
            map[i] = k;
        }
        let mut trip = Vec::new();
        for (ki, &i) in keep.iter().enumerate() {
            for (j, v) in self.row(i) {
                if map[j] != usize::MAX {
                    trip.push((ki, map[j], v));
                }
            }
        }
        Self::from_triplets(keep.len(), keep.len(), &trip)
    }

    /// Column restriction, used to drop Dirichlet unknowns from constraint rows.
    pub fn select_columns(&self, keep: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.ncols];
        for (k, &j) in keep.iter().enumerate() {
            map[j] = k;
        }
        let trip: Vec<_> = self
            .triplets()
            .into_iter()
            .filter(|t| map[t.1] != usize::MAX)
            .map(|(i, j, v)| (i, map[j], v))
            .collect();
        Self::from_triplets(self.nrows, keep.len(), &trip)
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.ncols]; self.nrows];
        for (i, j, v) in self.triplets() {
            d[i][j] = v;
        }
        d
    }

    /// Max `|a_ij − a_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> T {
        if self.nrows != self.ncols {
            return T::infinity();
        }
        let scale = self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let mut worst = T::zero();
        for (i, j, v) in self.triplets() {
            worst = worst.max((v - self.get(j, i)).abs());
        }
        if scale > T::zero() {
            worst / scale
        } else {
            worst
        }
    }

    pub fn is_symmetric(&self, rel_tol: T) -> bool {
        self.asymmetry() <= rel_tol
    }

    /// Debug dump: one `i j value` line per stored entry.
    pub fn write_triplets(&self, path: impl AsRef<Path>) -> Result<(), FemError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (i, j, v) in self.triplets() {
            writeln!(out, "{i} {j} {v:.17e}")?;
        }
        Ok(())
    }
}

/// Debug dump: one value per line.
pub fn write_vector<T: Scalar>(v: &[T], path: impl AsRef<Path>) -> Result<(), FemError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for x in v {
        writeln!(out, "{x:.17e}")?;
    }
    Ok(())
}

/// Unit-conductivity element stiffness of a square bilinear element
/// (independent of the element size in 2D), nodes counterclockwise.
pub const ELEMENT_STIFFNESS: [[f64; 4]; 4] = [
    [4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0],
    [-2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0],
];

/// Element mass of the unit square; scale by `h²`.
pub const ELEMENT_MASS: [[f64; 4]; 4] = [
    [4.0 / 36.0, 2.0 / 36.0, 1.0 / 36.0, 2.0 / 36.0],
    [2.0 / 36.0, 4.0 / 36.0, 2.0 / 36.0, 1.0 / 36.0],
    [1.0 / 36.0, 2.0 / 36.0, 4.0 / 36.0, 2.0 / 36.0],
    [2.0 / 36.0, 1.0 / 36.0, 2.0 / 36.0, 4.0 / 36.0],
];

/// Gauss points on `[0, 1]` for the 2-point rule (weights 1/2).
pub(crate) const GAUSS2: [f64; 2] = [0.5 - 0.288_675_134_594_812_9, 0.5 + 0.288_675_134_594_812_9];

/// Bilinear shape functions on the unit reference square at `(s, t)`.
#[inline]
pub(crate) fn shape(s: f64, t: f64) -> [f64; 4] {
    [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t]
}

/// Stiffness `∫ κ ∇N_p·∇N_q` on a sub-rectangle (local node numbering).
pub fn assemble_stiffness_on<T: Scalar>(
    grid: &FineGrid,
    rect: &CellRect,
    kappa: &PermeabilityField<T>,
) -> Result<SparseMatrix<T>, FemError> {
    check_len(grid.cell_count(), kappa.len())?;
    let ke = ELEMENT_STIFFNESS.map(|r| r.map(T::of));
    let mut trip = Vec::with_capacity(16 * rect.cell_count());
    for j in rect.j0..rect.j1 {
        for i in rect.i0..rect.i1 {
            let k = kappa.get(grid.cell_index(i, j));
            let nodes = rect.local_cell_nodes(i, j);
            for a in 0..4 {
                for b in 0..4 {
                    trip.push((nodes[a], nodes[b], k * ke[a][b]));
                }
            }
        }
    }
    let n = rect.node_count();
    Ok(SparseMatrix::from_triplets(n, n, &trip))
}

pub fn assemble_stiffness<T: Scalar>(
    grid: &FineGrid,
    kappa: &PermeabilityField<T>,
) -> Result<SparseMatrix<T>, FemError> {
    assemble_stiffness_on(grid, &grid.full_rect(), kappa)
}

/// Mass `∫ w N_p N_q` on a sub-rectangle; `weight` is per global cell (1 if `None`).
pub fn assemble_mass_on<T: Scalar>(
    grid: &FineGrid,
    rect: &CellRect,
    weight: Option<&[T]>,
) -> Result<SparseMatrix<T>, FemError> {
    if let Some(w) = weight {
        check_len(grid.cell_count(), w.len())?;
    }
    let h2 = grid.h() * grid.h();
    let me = ELEMENT_MASS.map(|r| r.map(|v| T::of(v * h2)));
    let mut trip = Vec::with_capacity(16 * rect.cell_count());
    for j in rect.j0..rect.j1 {
        for i in rect.i0..rect.i1 {
            let w = weight.map_or(T::one(), |w| w[grid.cell_index(i, j)]);
            let nodes = rect.local_cell_nodes(i, j);
            for a in 0..4 {
                for b in 0..4 {
                    trip.push((nodes[a], nodes[b], w * me[a][b]));
                }
            }
        }
    }
    let n = rect.node_count();
    Ok(SparseMatrix::from_triplets(n, n, &trip))
}

pub fn assemble_mass<T: Scalar>(
    grid: &FineGrid,
    weight: Option<&[T]>,
) -> Result<SparseMatrix<T>, FemError> {
    assemble_mass_on(grid, &grid.full_rect(), weight)
}

/// Load vector `∫ f N_p` with 2×2 Gauss quadrature per cell.
pub fn assemble_load<T: Scalar, F: Fn(f64, f64) -> T>(grid: &FineGrid, f: F) -> Vec<T> {
    let h = grid.h();
    let quarter = T::of(0.25 * h * h);
    let mut b = vec![T::zero(); grid.node_count()];
    for c in 0..grid.cell_count() {
        let (i, j) = grid.cell_ij(c);
        let nodes = grid.cell_nodes(c);
        for &s in &GAUSS2 {
            for &t in &GAUSS2 {
                let fv = f((i as f64 + s) * h, (j as f64 + t) * h) * quarter;
                let n = shape(s, t);
                for a in 0..4 {
                    b[nodes[a]] = b[nodes[a]] + fv * T::of(n[a]);
                }
            }
        }
    }
    b
}

/// Nodal interpolation of a pointwise function.
pub fn interpolate<T: Scalar, F: Fn(f64, f64) -> T>(grid: &FineGrid, f: F) -> Vec<T> {
    (0..grid.node_count())
        .map(|p| {
            let [x, y] = grid.node_xy(p);
            f(x, y)
        })
        .collect()
}

/// Homogeneous Dirichlet conditions by identity replacement of the
/// constrained rows and columns; the right-hand side is zeroed there.
pub fn apply_dirichlet<T: Scalar>(
    a: &SparseMatrix<T>,
    b: &[T],
    boundary: &[usize],
) -> (SparseMatrix<T>, Vec<T>) {
    let n = a.dim();
    let mut fixed = vec![false; n];
    for &p in boundary {
        fixed[p] = true;
    }
    let mut trip = Vec::with_capacity(a.nnz());
    for (i, j, v) in a.triplets() {
        if !fixed[i] && !fixed[j] {
            trip.push((i, j, v));
        }
    }
    for (p, _) in fixed.iter().enumerate().filter(|(_, &f)| f) {
        trip.push((p, p, T::one()));
    }
    let mut rhs = b.to_vec();
    for (p, r) in rhs.iter_mut().enumerate() {
        if fixed[p] {
            *r = T::zero();
        }
    }
    (SparseMatrix::from_triplets(n, n, &trip), rhs)
}

/// `∫ κ |∇u|²` over the grid.
pub fn energy<T: Scalar>(
    grid: &FineGrid,
    kappa: &PermeabilityField<T>,
    u: &[T],
) -> Result<T, FemError> {
    Ok(assemble_stiffness(grid, kappa)?.quad_form(u))
}

fn check_len(expected: usize, got: usize) -> Result<(), FemError> {
    if expected != got {
        return Err(FemError::SizeMismatch { expected, got });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_spd, symmetric_eigen, DenseMatrix};

    fn unit_kappa(g: &FineGrid) -> PermeabilityField<f64> {
        PermeabilityField::constant(g, 1.0).unwrap()
    }

    // Element matrices from integrating the bilinear shape gradients with a
    // 3×3 Gauss rule (exact for the biquadratic integrands).
    fn element_by_quadrature() -> ([[f64; 4]; 4], [[f64; 4]; 4]) {
        let pts = [
            0.5 - 0.5 * (0.6f64).sqrt(),
            0.5,
            0.5 + 0.5 * (0.6f64).sqrt(),
        ];
        let wts = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
        let mut k = [[0.0; 4]; 4];
        let mut m = [[0.0; 4]; 4];
        for (a, &s) in pts.iter().enumerate() {
            for (b, &t) in pts.iter().enumerate() {
                let w = wts[a] * wts[b];
                let n = shape(s, t);
                let gx = [-(1.0 - t), 1.0 - t, t, -t];
                let gy = [-(1.0 - s), -s, s, 1.0 - s];
                for p in 0..4 {
                    for q in 0..4 {
                        k[p][q] += w * (gx[p] * gx[q] + gy[p] * gy[q]);
                        m[p][q] += w * n[p] * n[q];
                    }
                }
            }
        }
        (k, m)
    }

    #[test]
    fn single_element_matrices() {
        let g = FineGrid::new(1).unwrap();
        let a = assemble_stiffness(&g, &unit_kappa(&g)).unwrap();
        let m = assemble_mass::<f64>(&g, None).unwrap();
        let (kq, mq) = element_by_quadrature();
        // grid node order (0,0),(1,0),(0,1),(1,1) vs counterclockwise
        let ccw = [0, 1, 3, 2];
        for p in 0..4 {
            for q in 0..4 {
                assert!((a.get(ccw[p], ccw[q]) - kq[p][q]).abs() < 1e-14);
                assert!((a.get(ccw[p], ccw[q]) - ELEMENT_STIFFNESS[p][q]).abs() < 1e-15);
                assert!((m.get(ccw[p], ccw[q]) - mq[p][q]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn stiffness_properties() {
        let g = FineGrid::new(6).unwrap();
        let k = PermeabilityField::from_values((0..36).map(|c| 1.0 + (c % 5) as f64).collect())
            .unwrap();
        let a = assemble_stiffness(&g, &k).unwrap();
        assert!(a.is_symmetric(1e-15));
        for i in 0..a.dim() {
            let s: f64 = a.row(i).map(|(_, v)| v).sum();
            assert!(s.abs() < 1e-13);
        }
        let a3 = assemble_stiffness(&g, &k.scaled(3.0).unwrap()).unwrap();
        for (i, j, v) in a.triplets() {
            assert!((a3.get(i, j) - 3.0 * v).abs() < 1e-13);
        }
        assert!(matches!(
            assemble_stiffness(
                &g,
                &PermeabilityField::constant(&FineGrid::new(5).unwrap(), 1.0).unwrap()
            ),
            Err(FemError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn mass_integrates_area() {
        let g = FineGrid::new(8).unwrap();
        let m = assemble_mass::<f64>(&g, None).unwrap();
        let one = vec![1.0; g.node_count()];
        assert!((m.quad_form(&one) - 1.0).abs() < 1e-14);

        let w: Vec<f64> = (0..g.cell_count())
            .map(|c| if c % 3 == 0 { 1.0 } else { 0.0 })
            .collect();
        let cells = w.iter().filter(|&&x| x == 1.0).count();
        let mw = assemble_mass(&g, Some(&w)).unwrap();
        assert!((mw.quad_form(&one) - cells as f64 * g.h() * g.h()).abs() < 1e-14);
    }

    #[test]
    fn load_quadrature() {
        let g = FineGrid::new(10).unwrap();
        assert!(assemble_load(&g, |_, _| 0.0f64).iter().all(|&v| v == 0.0));
        let s: f64 = assemble_load(&g, |_, _| 1.0f64).iter().sum();
        assert!((s - 1.0).abs() < 1e-14);

        // Gaussian source against a composite 8-point Gauss-Legendre oracle on a 40×40 split
        let f = |x: f64, y: f64| (-50.0 * ((x - 0.5).powi(2) + (y - 0.5).powi(2))).exp();
        let g100 = FineGrid::new(100).unwrap();
        let total: f64 = assemble_load(&g100, f).iter().sum();
        let (xs, ws) = gauss_legendre8();
        let mut exact = 0.0;
        let parts = 40;
        let hp = 1.0 / parts as f64;
        for a in 0..parts {
            for b in 0..parts {
                for (p, wp) in xs.iter().zip(&ws) {
                    for (q, wq) in xs.iter().zip(&ws) {
                        exact += wp * wq * hp * hp * f((a as f64 + p) * hp, (b as f64 + q) * hp);
                    }
                }
            }
        }
        assert!((total - exact).abs() < 1e-6, "{total} vs {exact}");
    }

    fn gauss_legendre8() -> ([f64; 8], [f64; 8]) {
        let x = [
            -0.960_289_856_497_536_3,
            -0.796_666_477_413_626_7,
            -0.525_532_409_916_329_0,
            -0.183_434_642_495_649_8,
            0.183_434_642_495_649_8,
            0.525_532_409_916_329_0,
            0.796_666_477_413_626_7,
            0.960_289_856_497_536_3,
        ];
        let w = [
            0.101_228_536_290_376_3,
            0.222_381_034_453_374_5,
            0.313_706_645_877_887_3,
            0.362_683_783_378_362_0,
            0.362_683_783_378_362_0,
            0.313_706_645_877_887_3,
            0.222_381_034_453_374_5,
            0.101_228_536_290_376_3,
        ];
        (x.map(|v| 0.5 * (v + 1.0)), w.map(|v| 0.5 * v))
    }

    #[test]
    fn dirichlet_two_by_two() {
        let g = FineGrid::new(2).unwrap();
        let a = assemble_stiffness(&g, &unit_kappa(&g)).unwrap();
        let b = assemble_load(&g, |_, _| 1.0f64);
        let (ad, bd) = apply_dirichlet(&a, &b, &g.boundary_nodes());
        // centre node: 4 cells × 4/6 on the diagonal, load 4 × h²/4
        assert!((ad.get(4, 4) - 8.0 / 3.0).abs() < 1e-15);
        assert!((bd[4] - 0.25).abs() < 1e-15);
        let x = solve_spd(&ad, &bd, 1e-14).unwrap();
        assert!((x[4] - 0.25 / (8.0 / 3.0)).abs() < 1e-14);
        for p in g.boundary_nodes() {
            assert_eq!(x[p], 0.0);
        }
        // idempotent
        let (ad2, bd2) = apply_dirichlet(&ad, &bd, &g.boundary_nodes());
        assert_eq!(ad2, ad);
        assert_eq!(bd2, bd);
    }

    #[test]
    fn constrained_stiffness_is_positive_definite() {
        let g = FineGrid::new(5).unwrap();
        let a = assemble_stiffness(&g, &unit_kappa(&g)).unwrap();
        let (ad, _) = apply_dirichlet(&a, &vec![0.0; g.node_count()], &g.boundary_nodes());
        let dense = DenseMatrix::from_rows(&ad.to_dense());
        let (vals, _) = symmetric_eigen(&dense).unwrap();
        assert!(vals.iter().all(|&l| l > 1e-3), "{vals:?}");
    }

    #[test]
    fn energy_dominates_scaled_unit_stiffness() {
        use rand::{Rng, SeedableRng};
        let g = FineGrid::new(10).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let k = PermeabilityField::from_values(
            (0..100)
                .map(|_| 10f64.powf(rng.gen_range(-6.0..-1.0)))
                .collect(),
        )
        .unwrap();
        let a = assemble_stiffness(&g, &k).unwrap();
        let a1 = assemble_stiffness(&g, &unit_kappa(&g)).unwrap();
        for _ in 0..10 {
            let v: Vec<f64> = (0..g.node_count())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            assert!(a.quad_form(&v) >= k.min() * a1.quad_form(&v) * (1.0 - 1e-12));
        }
    }

    #[test]
    fn assembly_is_deterministic() {
        let g = FineGrid::new(7).unwrap();
        let k = PermeabilityField::from_values((0..49).map(|c| 0.1 + c as f64 * 1e-3).collect())
            .unwrap();
        let a = assemble_stiffness(&g, &k).unwrap();
        let b = assemble_stiffness(&g, &k).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dumps() {
        let dir = tempfile::tempdir().unwrap();
        let g = FineGrid::new(2).unwrap();
        let a = assemble_mass::<f64>(&g, None).unwrap();
        a.write_triplets(dir.path().join("m.txt")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("m.txt")).unwrap();
        assert_eq!(text.lines().count(), a.nnz());
        let first: Vec<&str> = text.lines().next().unwrap().split(' ').collect();
        assert_eq!(first[0], "0");
        assert!((first[2].parse::<f64>().unwrap() - a.get(0, 0)).abs() == 0.0);
        write_vector(&[1.0f64, 2.0], dir.path().join("v.txt")).unwrap();
        assert_eq!(
            std::fs::read_to_string(dir.path().join("v.txt"))
                .unwrap()
                .lines()
                .count(),
            2
        );
    }
}
