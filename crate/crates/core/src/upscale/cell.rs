use rayon::prelude::*;

use super::UpscaleError;
use crate::fem::{apply_dirichlet, assemble_stiffness_on, FemError, SparseMatrix};
use crate::grid::{CellRect, CoarsePartition, ContinuumMap, FineGrid, PermeabilityField};
use crate::solver::KktSolver;
use crate::Scalar;

/// Largest accepted constraint residual, relative to the block area.
pub const CELL_RESIDUAL_TOL: f64 = 1e-9;

/// Cell problem solutions of one coarse block.
#[derive(Debug, Clone)]
pub struct CellBasis<T> {
    pub block: usize,
    /// Oversampled region `K⁺`; all vectors use its local node numbering.
    pub region: CellRect,
    /// The block `K` itself.
    pub target: CellRect,
    /// Continua with at least one cell in `K`. Functions of an absent
    /// continuum are left at zero.
    pub present: [bool; 2],
    pub phi: [Vec<T>; 2],
    /// `phi_grad[i][m]` is `φ_i^m`.
    pub phi_grad: [[Vec<T>; 2]; 2],
    /// `(block, continuum)` of every constraint row.
    pub constraints: Vec<(usize, u8)>,
    /// Constraints dropped because the continuum has no cell in that block.
    pub dropped: Vec<(usize, u8)>,
    /// `multipliers[i][0]` belongs to `φ_i`, `multipliers[i][1 + m]` to
    /// `φ_i^m`, with the sign convention `E φ + Cᵀ d = 0`.
    pub multipliers: [[Vec<T>; 3]; 2],
    /// Block centroid `c^m`.
    pub centering: [T; 2],
    /// Largest constraint residual divided by the block area.
    pub residual: T,
}

impl<T: Scalar> CellBasis<T> {
    /// `φ_i` (`m = None`) or `φ_i^m` at global fine node `(i, j)` of `K⁺`.
    pub fn value(&self, continuum: usize, m: Option<usize>, i: usize, j: usize) -> T {
        let l = self.region.local_node(i, j);
        match m {
            None => self.phi[continuum][l],
            Some(m) => self.phi_grad[continuum][m][l],
        }
    }

    /// Largest `|φ_i|` and `|φ_i^m|` over the nodes of `K`.
    pub fn max_abs_on_target(&self) -> (T, T) {
        let mut a = T::zero();
        let mut b = T::zero();
        for j in self.target.j0..=self.target.j1 {
            for i in self.target.i0..=self.target.i1 {
                let l = self.region.local_node(i, j);
                for c in 0..2 {
                    a = a.max(self.phi[c][l].abs());
                    for m in 0..2 {
                        b = b.max(self.phi_grad[c][m][l].abs());
                    }
                }
            }
        }
        (a, b)
    }
}

struct Constraints {
    c: SparseMatrix<f64>,
    rows: Vec<(usize, u8)>,
    dropped: Vec<(usize, u8)>,
    area: Vec<f64>,
    moment: Vec<[f64; 2]>,
}

fn constraints(
    grid: &FineGrid,
    partition: &CoarsePartition,
    map: &ContinuumMap,
    block: usize,
    region: &CellRect,
    fixed: &[bool],
) -> Constraints {
    let h = grid.h();
    let quarter = 0.25 * h * h;
    let center = partition.block_center(block);
    let mut trip = Vec::new();
    let mut rows = Vec::new();
    let mut dropped = Vec::new();
    let mut area = Vec::new();
    let mut moment = Vec::new();
    for ob in partition.oversampled_blocks(block) {
        let rect = partition.block_rect(ob);
        for k in 0..2u8 {
            let r = rows.len();
            let mut count = 0usize;
            let mut mom = [0.0f64; 2];
            for j in rect.j0..rect.j1 {
                for i in rect.i0..rect.i1 {
                    let c = grid.cell_index(i, j);
                    if map.label(c) != k {
                        continue;
                    }
                    count += 1;
                    let [x, y] = grid.cell_center(c);
                    mom[0] += x - center[0];
                    mom[1] += y - center[1];
                    for l in region.local_cell_nodes(i, j) {
                        if !fixed[l] {
                            trip.push((r, l, quarter));
                        }
                    }
                }
            }
            if count == 0 {
                dropped.push((ob, k));
                continue;
            }
            rows.push((ob, k));
            area.push(count as f64 * h * h);
            moment.push([mom[0] * h * h, mom[1] * h * h]);
        }
    }
    let c = SparseMatrix::from_triplets(rows.len(), region.node_count(), &trip);
    Constraints {
        c,
        rows,
        dropped,
        area,
        moment,
    }
}

/// KKT solve with `f = 0` followed by one step of iterative refinement.
fn solve_refined<T: Scalar>(
    kkt: &KktSolver<T>,
    e: &SparseMatrix<T>,
    c: &SparseMatrix<T>,
    g: &[T],
) -> Result<(Vec<T>, Vec<T>), crate::solver::SolverError> {
    let n = e.nrows();
    let (mut x, mut d) = kkt.solve(&vec![T::zero(); n], g)?;
    let ex = e.mul_vec(&x);
    let ctd = c.mul_transpose_vec(&d);
    let rf: Vec<T> = ex.iter().zip(&ctd).map(|(a, b)| -(*a + *b)).collect();
    let cx = c.mul_vec(&x);
    let rg: Vec<T> = g.iter().zip(&cx).map(|(a, b)| *a - *b).collect();
    let (dx, dd) = kkt.solve(&rf, &rg)?;
    for (xi, di) in x.iter_mut().zip(dx) {
        *xi = *xi + di;
    }
    for (di, ddi) in d.iter_mut().zip(dd) {
        *di = *di + ddi;
    }
    Ok((x, d))
}

/// Solves the cell problems of `block` on its oversampled region: energy
/// `∫_{K⁺} κ|∇φ|²` with natural conditions on `∂K⁺` (homogeneous Dirichlet
/// where `∂K⁺` meets `∂Ω`) subject to one average constraint per block of
/// `K⁺` and continuum present in it.
pub fn solve_cell_problems<T: Scalar>(
    grid: &FineGrid,
    partition: &CoarsePartition,
    map: &ContinuumMap,
    kappa: &PermeabilityField<T>,
    block: usize,
) -> Result<CellBasis<T>, UpscaleError> {
    map.check_grid(grid)?;
    if kappa.len() != grid.cell_count() {
        return Err(FemError::SizeMismatch {
            expected: grid.cell_count(),
            got: kappa.len(),
        }
        .into());
    }
    if block >= partition.block_count() {
        return Err(UpscaleError::Dimension {
            expected: partition.block_count(),
            got: block,
        });
    }
    let region = partition.oversampled_rect(block);
    let target = partition.block_rect(block);
    let nloc = region.node_count();
    let n = grid.n();
    let w = region.nx() + 1;
    let fixed: Vec<bool> = (0..nloc)
        .map(|l| {
            let (i, j) = (region.i0 + l % w, region.j0 + l / w);
            i == 0 || j == 0 || i == n || j == n
        })
        .collect();
    let fixed_list: Vec<usize> = (0..nloc).filter(|&l| fixed[l]).collect();
    let stiff = assemble_stiffness_on(grid, &region, kappa)?;
    let (e, _) = apply_dirichlet(&stiff, &vec![T::zero(); nloc], &fixed_list);
    let cons = constraints(grid, partition, map, block, &region, &fixed);
    let c: SparseMatrix<T> = convert(&cons.c);
    let kkt = KktSolver::new(&e, &c).map_err(|source| UpscaleError::Cell { block, source })?;

    let mut present = [false; 2];
    for cell in target.cells(grid) {
        present[map.label(cell) as usize] = true;
    }
    let center = partition.block_center(block);
    let zero = || vec![T::zero(); nloc];
    let mut phi = [zero(), zero()];
    let mut phi_grad = [[zero(), zero()], [zero(), zero()]];
    let mut multipliers: [[Vec<T>; 3]; 2] = Default::default();
    let area_k = target.area(grid.h());
    let mut residual = T::zero();
    for i in 0..2u8 {
        if !present[i as usize] {
            continue;
        }
        for slot in 0..3 {
            let g: Vec<T> = cons
                .rows
                .iter()
                .enumerate()
                .map(|(r, &(_, k))| {
                    if k != i {
                        T::zero()
                    } else if slot == 0 {
                        T::of(cons.area[r])
                    } else {
                        T::of(cons.moment[r][slot - 1])
                    }
                })
                .collect();
            let (x, d) = solve_refined(&kkt, &e, &c, &g)
                .map_err(|source| UpscaleError::Cell { block, source })?;
            let cx = c.mul_vec(&x);
            for (a, b) in cx.iter().zip(&g) {
                residual = residual.max((*a - *b).abs() / T::of(area_k));
            }
            match slot {
                0 => phi[i as usize] = x,
                s => phi_grad[i as usize][s - 1] = x,
            }
            multipliers[i as usize][slot] = d;
        }
    }
    if !(residual.to_f64_lossy() <= CELL_RESIDUAL_TOL) {
        return Err(UpscaleError::Residual {
            block,
            residual: residual.to_f64_lossy(),
        });
    }
    Ok(CellBasis {
        block,
        region,
        target,
        present,
        phi,
        phi_grad,
        constraints: cons.rows,
        dropped: cons.dropped,
        multipliers,
        centering: [T::of(center[0]), T::of(center[1])],
        residual,
    })
}

fn convert<T: Scalar>(a: &SparseMatrix<f64>) -> SparseMatrix<T> {
    let trip: Vec<(usize, usize, T)> = a
        .triplets()
        .into_iter()
        .map(|(i, j, v)| (i, j, T::of(v)))
        .collect();
    SparseMatrix::from_triplets(a.nrows(), a.ncols(), &trip)
}

/// Cell problems of every block, solved in parallel; output in block order.
pub fn solve_all_cell_problems<T: Scalar>(
    grid: &FineGrid,
    partition: &CoarsePartition,
    map: &ContinuumMap,
    kappa: &PermeabilityField<T>,
) -> Result<Vec<CellBasis<T>>, UpscaleError> {
    (0..partition.block_count())
        .into_par_iter()
        .map(|b| solve_cell_problems(grid, partition, map, kappa, b))
        .collect()
}
