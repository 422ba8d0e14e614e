//! Uniform meshes of the unit square, coarse block partitions with
//! oversampling, two-continuum label maps and permeability fields.
//!
//! Numbering is lexicographic with `x` running fastest: node `(i, j)` is
//! `j * (n + 1) + i` and cell `(i, j)` is `j * n + i`.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid must have at least one cell per side")]
    EmptyGrid,
    #[error("{what}: {divisor} does not divide {n}")]
    NotDivisible {
        what: &'static str,
        n: usize,
        divisor: usize,
    },
    #[error("pattern has {got} cells per side, expected {expected}")]
    PatternSize { expected: usize, got: usize },
    #[error("invalid continuum label {label} at cell {cell}")]
    BadLabel { cell: usize, label: u8 },
    #[error("medium resolution mismatch: file has n={file}, grid has n={grid}")]
    ResolutionMismatch { file: usize, grid: usize },
    #[error("malformed medium file: {0}")]
    Malformed(String),
    #[error("microscale parameter must lie in (0, 1), got {0}")]
    BadEps(f64),
    #[error("field has {got} values, expected {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("permeability must be positive and finite (cell {0})")]
    NonPositive(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniform `n × n` mesh of `[0, 1]²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FineGrid {
    n: usize,
}

impl FineGrid {
    pub fn new(n: usize) -> Result<Self, GridError> {
        if n == 0 {
            return Err(GridError::EmptyGrid);
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn node_count(&self) -> usize {
        (self.n + 1) * (self.n + 1)
    }

    pub fn cell_count(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }

    #[inline]
    pub fn node_ij(&self, p: usize) -> (usize, usize) {
        (p % (self.n + 1), p / (self.n + 1))
    }

    #[inline]
    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    #[inline]
    pub fn cell_ij(&self, c: usize) -> (usize, usize) {
        (c % self.n, c / self.n)
    }

    pub fn node_xy(&self, p: usize) -> [f64; 2] {
        let (i, j) = self.node_ij(p);
        [i as f64 * self.h(), j as f64 * self.h()]
    }

    pub fn cell_center(&self, c: usize) -> [f64; 2] {
        let (i, j) = self.cell_ij(c);
        [(i as f64 + 0.5) * self.h(), (j as f64 + 0.5) * self.h()]
    }

    /// Corner nodes of a cell, counterclockwise from the lower-left one.
    pub fn cell_nodes(&self, c: usize) -> [usize; 4] {
        let (i, j) = self.cell_ij(c);
        [
            self.node_index(i, j),
            self.node_index(i + 1, j),
            self.node_index(i + 1, j + 1),
            self.node_index(i, j + 1),
        ]
    }

    pub fn is_boundary_node(&self, p: usize) -> bool {
        let (i, j) = self.node_ij(p);
        i == 0 || j == 0 || i == self.n || j == self.n
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&p| self.is_boundary_node(p))
            .collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&p| !self.is_boundary_node(p))
            .collect()
    }

    pub fn full_rect(&self) -> CellRect {
        CellRect {
            i0: 0,
            j0: 0,
            i1: self.n,
            j1: self.n,
        }
    }
}

/// Half-open rectangle of fine cells `[i0, i1) × [j0, j1)`.
///
/// Carries its own lexicographic node numbering so that sub-meshes (coarse
/// blocks, oversampled regions) can be assembled independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRect {
    pub i0: usize,
    pub j0: usize,
    pub i1: usize,
    pub j1: usize,
}

impl CellRect {
    pub fn nx(&self) -> usize {
        self.i1 - self.i0
    }

    pub fn ny(&self) -> usize {
        self.j1 - self.j0
    }

    pub fn cell_count(&self) -> usize {
        self.nx() * self.ny()
    }

    pub fn node_count(&self) -> usize {
        (self.nx() + 1) * (self.ny() + 1)
    }

    pub fn contains_cell(&self, i: usize, j: usize) -> bool {
        i >= self.i0 && i < self.i1 && j >= self.j0 && j < self.j1
    }

    pub fn contains(&self, other: &CellRect) -> bool {
        other.i0 >= self.i0 && other.i1 <= self.i1 && other.j0 >= self.j0 && other.j1 <= self.j1
    }

    /// Global cell indices in row-major order.
    pub fn cells<'a>(&'a self, grid: &'a FineGrid) -> impl Iterator<Item = usize> + 'a {
        (self.j0..self.j1).flat_map(move |j| (self.i0..self.i1).map(move |i| grid.cell_index(i, j)))
    }

    /// Local node index of global node `(i, j)`; the node must lie in the rectangle.
    #[inline]
    pub fn local_node(&self, i: usize, j: usize) -> usize {
        debug_assert!(i >= self.i0 && i <= self.i1 && j >= self.j0 && j <= self.j1);
        (j - self.j0) * (self.nx() + 1) + (i - self.i0)
    }

    /// Global node index of a local node.
    pub fn global_node(&self, grid: &FineGrid, local: usize) -> usize {
        let w = self.nx() + 1;
        grid.node_index(self.i0 + local % w, self.j0 + local / w)
    }

    /// Local corner nodes (counterclockwise) of global cell `(i, j)`.
    pub fn local_cell_nodes(&self, i: usize, j: usize) -> [usize; 4] {
        [
            self.local_node(i, j),
            self.local_node(i + 1, j),
            self.local_node(i + 1, j + 1),
            self.local_node(i, j + 1),
        ]
    }

    pub fn area(&self, h: f64) -> f64 {
        self.cell_count() as f64 * h * h
    }
}

/// Partition of the fine grid into `hinv × hinv` coarse blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarsePartition {
    n: usize,
    hinv: usize,
    k_os: usize,
    /// Shift of the partition origin; computations always use zero.
    pub z_offset: [f64; 2],
}

impl CoarsePartition {
    pub fn new(grid: &FineGrid, hinv: usize, k_os: usize) -> Result<Self, GridError> {
        if hinv == 0 || grid.n() % hinv != 0 {
            return Err(GridError::NotDivisible {
                what: "coarse blocks per side",
                n: grid.n(),
                divisor: hinv,
            });
        }
        Ok(Self {
            n: grid.n(),
            hinv,
            k_os,
            z_offset: [0.0, 0.0],
        })
    }

    pub fn hinv(&self) -> usize {
        self.hinv
    }

    pub fn coarse_h(&self) -> f64 {
        1.0 / self.hinv as f64
    }

    pub fn k_os(&self) -> usize {
        self.k_os
    }

    /// Fine cells per block side.
    pub fn block_cells(&self) -> usize {
        self.n / self.hinv
    }

    pub fn block_count(&self) -> usize {
        self.hinv * self.hinv
    }

    pub fn block_index(&self, bi: usize, bj: usize) -> usize {
        bj * self.hinv + bi
    }

    pub fn block_ij(&self, b: usize) -> (usize, usize) {
        (b % self.hinv, b / self.hinv)
    }

    pub fn block_rect(&self, b: usize) -> CellRect {
        let (bi, bj) = self.block_ij(b);
        let m = self.block_cells();
        CellRect {
            i0: bi * m,
            j0: bj * m,
            i1: (bi + 1) * m,
            j1: (bj + 1) * m,
        }
    }

    pub fn block_of_cell(&self, grid: &FineGrid, c: usize) -> usize {
        let (i, j) = grid.cell_ij(c);
        let m = self.block_cells();
        self.block_index(i / m, j / m)
    }

    fn oversampled_range(&self, b: usize) -> (usize, usize, usize, usize) {
        let (bi, bj) = self.block_ij(b);
        let k = self.k_os;
        (
            bi.saturating_sub(k),
            bj.saturating_sub(k),
            (bi + k).min(self.hinv - 1),
            (bj + k).min(self.hinv - 1),
        )
    }

    /// Blocks of the oversampled region `K⁺` (row-major), clipped to the domain.
    pub fn oversampled_blocks(&self, b: usize) -> Vec<usize> {
        let (i0, j0, i1, j1) = self.oversampled_range(b);
        (j0..=j1)
            .flat_map(|bj| (i0..=i1).map(move |bi| self.block_index(bi, bj)))
            .collect()
    }

    pub fn oversampled_rect(&self, b: usize) -> CellRect {
        let (i0, j0, i1, j1) = self.oversampled_range(b);
        let m = self.block_cells();
        CellRect {
            i0: i0 * m,
            j0: j0 * m,
            i1: (i1 + 1) * m,
            j1: (j1 + 1) * m,
        }
    }

    pub fn block_center(&self, b: usize) -> [f64; 2] {
        let (bi, bj) = self.block_ij(b);
        let hc = self.coarse_h();
        [(bi as f64 + 0.5) * hc, (bj as f64 + 0.5) * hc]
    }

    pub fn block_area(&self) -> f64 {
        self.coarse_h() * self.coarse_h()
    }

    /// Coarse nodes are the `(hinv + 1)²` block corners.
    pub fn coarse_node_count(&self) -> usize {
        (self.hinv + 1) * (self.hinv + 1)
    }

    pub fn coarse_node_index(&self, i: usize, j: usize) -> usize {
        j * (self.hinv + 1) + i
    }

    pub fn is_coarse_boundary(&self, p: usize) -> bool {
        let w = self.hinv + 1;
        let (i, j) = (p % w, p / w);
        i == 0 || j == 0 || i == self.hinv || j == self.hinv
    }

    /// Corner coarse nodes of a block, counterclockwise.
    pub fn block_nodes(&self, b: usize) -> [usize; 4] {
        let (bi, bj) = self.block_ij(b);
        [
            self.coarse_node_index(bi, bj),
            self.coarse_node_index(bi + 1, bj),
            self.coarse_node_index(bi + 1, bj + 1),
            self.coarse_node_index(bi, bj + 1),
        ]
    }
}

/// Per-cell continuum label: 0 for `Ω₀`, 1 for `Ω₁`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContinuumMap {
    n: usize,
    labels: Vec<u8>,
}

impl ContinuumMap {
    pub fn new(n: usize, labels: Vec<u8>) -> Result<Self, GridError> {
        if labels.len() != n * n {
            return Err(GridError::SizeMismatch {
                expected: n * n,
                got: labels.len(),
            });
        }
        if let Some((cell, &label)) = labels.iter().enumerate().find(|(_, &l)| l > 1) {
            return Err(GridError::BadLabel { cell, label });
        }
        Ok(Self { n, labels })
    }

    pub fn uniform(grid: &FineGrid, label: u8) -> Result<Self, GridError> {
        Self::new(grid.n(), vec![label; grid.cell_count()])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn label(&self, cell: usize) -> u8 {
        self.labels[cell]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn fraction(&self, label: u8) -> f64 {
        self.count(label) as f64 / self.labels.len() as f64
    }

    pub fn check_grid(&self, grid: &FineGrid) -> Result<(), GridError> {
        if self.n != grid.n() {
            return Err(GridError::ResolutionMismatch {
                file: self.n,
                grid: grid.n(),
            });
        }
        Ok(())
    }

    /// Number of cells of `label` inside a cell rectangle.
    pub fn count_in(&self, grid: &FineGrid, rect: &CellRect, label: u8) -> usize {
        rect.cells(grid)
            .filter(|&c| self.labels[c] == label)
            .count()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.n * (self.n + 1) + 32);
        writeln!(s, "medium v1 n={}", self.n).unwrap();
        for row in self.labels.chunks(self.n) {
            s.extend(row.iter().map(|&l| if l == 0 { '0' } else { '1' }));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, GridError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| GridError::Malformed("empty file".into()))?;
        let n: usize = header
            .trim()
            .strip_prefix("medium v1 n=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| GridError::Malformed(format!("bad header {header:?}")))?;
        if n == 0 {
            return Err(GridError::EmptyGrid);
        }
        let mut labels = Vec::with_capacity(n * n);
        for (row, line) in lines.by_ref().take(n).enumerate() {
            if line.len() != n {
                return Err(GridError::Malformed(format!(
                    "row {row} has {} columns, expected {n}",
                    line.len()
                )));
            }
            for ch in line.bytes() {
                match ch {
                    b'0' | b'1' => labels.push(ch - b'0'),
                    other => {
                        return Err(GridError::BadLabel {
                            cell: labels.len(),
                            label: other.wrapping_sub(b'0'),
                        })
                    }
                }
            }
        }
        if labels.len() != n * n {
            return Err(GridError::Malformed(format!("expected {n} rows")));
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(GridError::Malformed("trailing data after last row".into()));
        }
        Self::new(n, labels)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GridError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Loads a medium file and checks it against the grid resolution.
    pub fn load(path: impl AsRef<Path>, grid: &FineGrid) -> Result<Self, GridError> {
        let map = Self::from_text(&std::fs::read_to_string(path)?)?;
        map.check_grid(grid)?;
        Ok(map)
    }
}

/// Cell labels of one period of a periodic medium.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitPattern {
    p: usize,
    labels: Vec<u8>,
}

impl UnitPattern {
    pub fn new(p: usize, labels: Vec<u8>) -> Result<Self, GridError> {
        let map = ContinuumMap::new(p, labels)?;
        Ok(Self {
            p,
            labels: map.labels,
        })
    }

    pub fn uniform(p: usize, label: u8) -> Result<Self, GridError> {
        Self::new(p, vec![label; p * p])
    }

    /// Centered square inclusion (label 0) in a label-1 matrix.
    ///
    /// The side is `p / 2` rounded up to the parity of `p`, so the
    /// inclusion is exactly centered in the period.
    pub fn centered_square(p: usize) -> Self {
        let mut w = p.div_ceil(2);
        if (p - w) % 2 == 1 {
            w += 1;
        }
        let w = w.min(p);
        let lo = (p - w) / 2;
        let hi = lo + w;
        let labels = (0..p * p)
            .map(|c| {
                let (i, j) = (c % p, c / p);
                if (lo..hi).contains(&i) && (lo..hi).contains(&j) {
                    0
                } else {
                    1
                }
            })
            .collect();
        Self { p, labels }
    }

    pub fn cells_per_side(&self) -> usize {
        self.p
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
}

/// Tiles the fine grid with `eps_inv × eps_inv` copies of `pattern`.
pub fn build_periodic_medium(
    grid: &FineGrid,
    eps_inv: usize,
    pattern: &UnitPattern,
) -> Result<ContinuumMap, GridError> {
    let n = grid.n();
    if eps_inv == 0 || n % eps_inv != 0 {
        return Err(GridError::NotDivisible {
            what: "periods per side",
            n,
            divisor: eps_inv,
        });
    }
    let p = n / eps_inv;
    if pattern.p != p {
        return Err(GridError::PatternSize {
            expected: p,
            got: pattern.p,
        });
    }
    let labels = (0..grid.cell_count())
        .map(|c| {
            let (i, j) = grid.cell_ij(c);
            pattern.labels[(j % p) * p + i % p]
        })
        .collect();
    ContinuumMap::new(n, labels)
}

/// Deterministic nonperiodic two-continuum medium: one randomly sized and
/// placed inclusion per `cell × cell` tile plus a few thin low-conductivity
/// channels. Every tile keeps cells of both continua.
pub fn nonperiodic_medium(
    grid: &FineGrid,
    tile: usize,
    seed: u64,
) -> Result<ContinuumMap, GridError> {
    let n = grid.n();
    if tile < 3 || n % tile != 0 {
        return Err(GridError::NotDivisible {
            what: "nonperiodic tile size",
            n,
            divisor: tile,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = vec![1u8; n * n];
    let tiles = n / tile;
    let max_side = (tile * 3).div_ceil(5).max(1);
    for tj in 0..tiles {
        for ti in 0..tiles {
            let wx = rng.gen_range(1..=max_side);
            let wy = rng.gen_range(1..=max_side);
            let ox = rng.gen_range(0..=tile - wx);
            let oy = rng.gen_range(0..=tile - wy);
            for j in 0..wy {
                for i in 0..wx {
                    labels[(tj * tile + oy + j) * n + ti * tile + ox + i] = 0;
                }
            }
        }
    }
    // channels: one cell thick, spanning a random stretch of the domain
    let channels = (n / (4 * tile)).max(1);
    for _ in 0..channels {
        let horizontal = rng.gen_bool(0.5);
        let line = rng.gen_range(1..n - 1);
        let start = rng.gen_range(0..n / 2);
        let len = rng.gen_range(n / 4..=n / 2);
        for s in start..(start + len).min(n) {
            let (i, j) = if horizontal { (s, line) } else { (line, s) };
            labels[j * n + i] = 0;
        }
    }
    // keep at least one matrix cell per tile
    for tj in 0..tiles {
        for ti in 0..tiles {
            let has_one = (0..tile)
                .any(|j| (0..tile).any(|i| labels[(tj * tile + j) * n + ti * tile + i] == 1));
            if !has_one {
                labels[tj * tile * n + ti * tile] = 1;
            }
        }
    }
    ContinuumMap::new(n, labels)
}

/// Per-cell conductivity `κ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PermeabilityField<T> {
    values: Vec<T>,
    min: T,
    max: T,
}

impl<T: Scalar> PermeabilityField<T> {
    pub fn from_values(values: Vec<T>) -> Result<Self, GridError> {
        if let Some(c) = values
            .iter()
            .position(|v| !(v.is_finite() && *v > T::zero()))
        {
            return Err(GridError::NonPositive(c));
        }
        let min = values.iter().copied().fold(T::infinity(), T::min);
        let max = values.iter().copied().fold(T::neg_infinity(), T::max);
        Ok(Self { values, min, max })
    }

    pub fn constant(grid: &FineGrid, value: T) -> Result<Self, GridError> {
        Self::from_values(vec![value; grid.cell_count()])
    }

    /// Two-valued high-contrast field: `ε/10⁵` on `Ω₀`, `1/(100ε)` on `Ω₁`.
    pub fn from_continuum(map: &ContinuumMap, eps: f64) -> Result<Self, GridError> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(GridError::BadEps(eps));
        }
        let (k0, k1) = Self::contrast_values(eps);
        Self::from_values(
            map.labels()
                .iter()
                .map(|&l| if l == 0 { k0 } else { k1 })
                .collect(),
        )
    }

    /// `(κ₀, κ₁)` for a given microscale.
    pub fn contrast_values(eps: f64) -> (T, T) {
        (T::of(eps / 1e5), T::of(1.0 / (100.0 * eps)))
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn get(&self, cell: usize) -> T {
        self.values[cell]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> T {
        self.min
    }

    pub fn max(&self) -> T {
        self.max
    }

    pub fn scaled(&self, c: T) -> Result<Self, GridError> {
        Self::from_values(self.values.iter().map(|&v| v * c).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts() {
        let g = FineGrid::new(1).unwrap();
        assert_eq!((g.node_count(), g.cell_count()), (4, 1));
        assert_eq!(g.boundary_nodes().len(), 4);

        let g = FineGrid::new(2).unwrap();
        assert_eq!((g.node_count(), g.cell_count()), (9, 4));
        assert_eq!(g.interior_nodes(), vec![4]);

        assert_eq!(FineGrid::new(400).unwrap().node_count(), 160_801);
        assert!(matches!(FineGrid::new(0), Err(GridError::EmptyGrid)));
    }

    #[test]
    fn interior_nodes_have_four_cells() {
        let g = FineGrid::new(5).unwrap();
        let mut adj = vec![0usize; g.node_count()];
        for c in 0..g.cell_count() {
            for p in g.cell_nodes(c) {
                adj[p] += 1;
            }
        }
        for p in g.interior_nodes() {
            assert_eq!(adj[p], 4);
        }
        for p in g.boundary_nodes() {
            let [x, y] = g.node_xy(p);
            assert!(x == 0.0 || y == 0.0 || x == 1.0 || y == 1.0);
        }
    }

    #[test]
    fn partition_tiles_the_grid() {
        let g = FineGrid::new(400).unwrap();
        let part = CoarsePartition::new(&g, 20, 1).unwrap();
        assert_eq!(part.block_count(), 400);
        assert_eq!(part.block_rect(0).cell_count(), 400);

        let g = FineGrid::new(12).unwrap();
        let part = CoarsePartition::new(&g, 4, 1).unwrap();
        let mut owner = vec![usize::MAX; g.cell_count()];
        for b in 0..part.block_count() {
            for c in part.block_rect(b).cells(&g) {
                assert_eq!(owner[c], usize::MAX, "cell {c} in two blocks");
                owner[c] = b;
                assert_eq!(part.block_of_cell(&g, c), b);
            }
        }
        assert!(owner.iter().all(|&b| b != usize::MAX));
    }

    #[test]
    fn oversampling_regions() {
        let g = FineGrid::new(20).unwrap();
        let part = CoarsePartition::new(&g, 5, 1).unwrap();
        let interior = part.block_index(2, 2);
        assert_eq!(part.oversampled_blocks(interior).len(), 9);
        assert_eq!(part.oversampled_blocks(0).len(), 4);
        assert_eq!(part.oversampled_blocks(part.block_index(4, 2)).len(), 6);
        let full = g.full_rect();
        for b in 0..part.block_count() {
            let k = part.block_rect(b);
            let kp = part.oversampled_rect(b);
            assert!(kp.contains(&k) && full.contains(&kp));
        }
        // monotone in the number of layers
        for a in 0..3 {
            let pa = CoarsePartition::new(&g, 5, a).unwrap();
            let pb = CoarsePartition::new(&g, 5, a + 1).unwrap();
            for b in 0..pa.block_count() {
                assert!(pb.oversampled_rect(b).contains(&pa.oversampled_rect(b)));
            }
        }
        let p0 = CoarsePartition::new(&g, 5, 0).unwrap();
        assert_eq!(p0.oversampled_rect(7), p0.block_rect(7));
    }

    #[test]
    fn partition_rejects_non_divisor() {
        let g = FineGrid::new(100).unwrap();
        let err = CoarsePartition::new(&g, 30, 1).unwrap_err();
        assert!(err.to_string().contains("30 does not divide 100"));
    }

    #[test]
    fn periodic_medium() {
        let g = FineGrid::new(100).unwrap();
        let zero = UnitPattern::uniform(10, 0).unwrap();
        let m = build_periodic_medium(&g, 10, &zero).unwrap();
        assert_eq!(m.count(0), 10_000);

        let pat = UnitPattern::centered_square(10);
        let m = build_periodic_medium(&g, 10, &pat).unwrap();
        let pat_zero = pat.labels().iter().filter(|&&l| l == 0).count();
        // count directly: each of the 100 periods carries the pattern's label-0 cells
        let mut direct = 0;
        for c in 0..g.cell_count() {
            let (i, j) = g.cell_ij(c);
            if pat.labels()[(j % 10) * 10 + i % 10] == 0 {
                direct += 1;
            }
        }
        assert_eq!(m.count(0), direct);
        assert!((m.fraction(0) - pat_zero as f64 / 100.0).abs() < 1e-15);
        // mirror symmetric and centered
        for j in 0..10 {
            for i in 0..10 {
                assert_eq!(pat.labels()[j * 10 + i], pat.labels()[j * 10 + 9 - i]);
                assert_eq!(pat.labels()[j * 10 + i], pat.labels()[(9 - j) * 10 + i]);
            }
        }
        assert!(build_periodic_medium(&g, 30, &pat).is_err());
        assert!(matches!(
            build_periodic_medium(&g, 20, &pat),
            Err(GridError::PatternSize { .. })
        ));
    }

    #[test]
    fn medium_text_roundtrip_and_errors() {
        let g = FineGrid::new(20).unwrap();
        let m = nonperiodic_medium(&g, 5, 3).unwrap();
        let text = m.to_text();
        assert!(text.starts_with("medium v1 n=20\n"));
        assert_eq!(ContinuumMap::from_text(&text).unwrap(), m);

        let bad = "medium v1 n=2\n01\n21\n";
        assert!(matches!(
            ContinuumMap::from_text(bad),
            Err(GridError::BadLabel { .. })
        ));
        assert!(ContinuumMap::from_text("medium v1 n=2\n01\n").is_err());
        assert!(ContinuumMap::from_text("medium v2 n=2\n01\n11\n").is_err());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.medium");
        let g100 = FineGrid::new(100).unwrap();
        let big = build_periodic_medium(&g100, 10, &UnitPattern::centered_square(10)).unwrap();
        big.save(&path).unwrap();
        assert_eq!(ContinuumMap::load(&path, &g100).unwrap(), big);
        let g50 = FineGrid::new(50).unwrap();
        assert!(matches!(
            ContinuumMap::load(&path, &g50),
            Err(GridError::ResolutionMismatch {
                file: 100,
                grid: 50
            })
        ));
    }

    #[test]
    fn nonperiodic_medium_is_deterministic_and_mixed() {
        let g = FineGrid::new(100).unwrap();
        let a = nonperiodic_medium(&g, 5, 11).unwrap();
        let b = nonperiodic_medium(&g, 5, 11).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        let part = CoarsePartition::new(&g, 20, 1).unwrap();
        for blk in 0..part.block_count() {
            let r = part.block_rect(blk);
            assert!(a.count_in(&g, &r, 0) > 0 && a.count_in(&g, &r, 1) > 0);
        }
    }

    #[test]
    fn kappa_from_labels() {
        let g = FineGrid::new(10).unwrap();
        let m = build_periodic_medium(&g, 1, &UnitPattern::centered_square(10)).unwrap();
        let k = PermeabilityField::<f64>::from_continuum(&m, 0.1).unwrap();
        assert!((k.min() - 1e-6).abs() < 1e-20);
        assert!((k.max() - 0.1).abs() < 1e-16);
        assert!((k.max() / k.min() - 1e5).abs() < 1e-6);
        let scan_min = k.values().iter().copied().fold(f64::MAX, f64::min);
        assert_eq!(scan_min, k.min());

        let ones = ContinuumMap::uniform(&g, 1).unwrap();
        let k1 = PermeabilityField::<f64>::from_continuum(&ones, 0.1).unwrap();
        assert!(k1.values().iter().all(|&v| v == 1.0 / (100.0 * 0.1)));
        assert!(PermeabilityField::<f64>::from_continuum(&ones, 1.5).is_err());
    }
}
