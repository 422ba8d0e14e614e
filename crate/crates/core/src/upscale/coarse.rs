use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use rayon::prelude::*;

use super::{CellBasis, UpscaleError};
use crate::fem::{shape, SparseMatrix, ELEMENT_MASS, ELEMENT_STIFFNESS, GAUSS2};
use crate::grid::{CoarsePartition, FineGrid, PermeabilityField};
use crate::solver::{generalized_eigen, Eigendecomposition, SkylineCholesky};
use crate::Scalar;

/// Effective coefficients of one block.
///
/// Raw integrals over `K`; the rescaled ("hat") versions are methods.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveBlock<T> {
    pub block: usize,
    /// `|K|`.
    pub area: T,
    pub eps: T,
    pub present: [bool; 2],
    /// `alpha[i][j][m][n] = ∫_K κ ∇φ_i^m · ∇φ_j^n`.
    pub alpha: [[[[T; 2]; 2]; 2]; 2],
    /// `beta[i][j][m] = ∫_K κ ∇φ_i^m · ∇φ_j`.
    pub beta: [[[T; 2]; 2]; 2],
    /// `gamma[i][j] = ∫_K κ ∇φ_i · ∇φ_j`.
    pub gamma: [[T; 2]; 2],
    /// `mass[i][j] = ∫_K φ_i φ_j`.
    pub mass: [[T; 2]; 2],
}

impl<T: Scalar> EffectiveBlock<T> {
    pub fn alpha_hat(&self, i: usize, j: usize, m: usize, n: usize) -> T {
        self.alpha[i][j][m][n] / self.area
    }

    pub fn beta_hat(&self, i: usize, j: usize, m: usize) -> T {
        self.eps * self.beta[i][j][m] / self.area
    }

    pub fn gamma_hat(&self, i: usize, j: usize) -> T {
        self.eps * self.eps * self.gamma[i][j] / self.area
    }

    pub fn mass_hat(&self, i: usize, j: usize) -> T {
        self.mass[i][j] / self.area
    }
}

/// Energy and mass Gram matrices of the cell functions over `K`.
pub fn effective_coeffs<T: Scalar>(
    grid: &FineGrid,
    basis: &CellBasis<T>,
    kappa: &PermeabilityField<T>,
    eps: T,
) -> EffectiveBlock<T> {
    // φ_0, φ_1, φ_0^1, φ_0^2, φ_1^1, φ_1^2
    let funcs: [&[T]; 6] = [
        &basis.phi[0],
        &basis.phi[1],
        &basis.phi_grad[0][0],
        &basis.phi_grad[0][1],
        &basis.phi_grad[1][0],
        &basis.phi_grad[1][1],
    ];
    let ke = ELEMENT_STIFFNESS.map(|r| r.map(T::of));
    let h2 = grid.h() * grid.h();
    let me = ELEMENT_MASS.map(|r| r.map(|v| T::of(v * h2)));
    let mut stiff = [[T::zero(); 6]; 6];
    let mut mass = [[T::zero(); 2]; 2];
    let t = &basis.target;
    for j in t.j0..t.j1 {
        for i in t.i0..t.i1 {
            let k = kappa.get(grid.cell_index(i, j));
            let nodes = basis.region.local_cell_nodes(i, j);
            let vals: Vec<[T; 4]> = funcs.iter().map(|f| nodes.map(|l| f[l])).collect();
            let mut kv = [[T::zero(); 4]; 6];
            let mut mv = [[T::zero(); 4]; 2];
            for (a, v) in vals.iter().enumerate() {
                for r in 0..4 {
                    kv[a][r] = (0..4).fold(T::zero(), |s, c| s + ke[r][c] * v[c]);
                    if a < 2 {
                        mv[a][r] = (0..4).fold(T::zero(), |s, c| s + me[r][c] * v[c]);
                    }
                }
            }
            for a in 0..6 {
                for b in 0..6 {
                    let e = (0..4).fold(T::zero(), |s, r| s + vals[a][r] * kv[b][r]);
                    stiff[a][b] = stiff[a][b] + k * e;
                }
            }
            for a in 0..2 {
                for b in 0..2 {
                    mass[a][b] =
                        mass[a][b] + (0..4).fold(T::zero(), |s, r| s + vals[a][r] * mv[b][r]);
                }
            }
        }
    }
    let g = |i: usize, m: usize| 2 + 2 * i + m;
    let mut alpha = [[[[T::zero(); 2]; 2]; 2]; 2];
    let mut beta = [[[T::zero(); 2]; 2]; 2];
    let mut gamma = [[T::zero(); 2]; 2];
    for i in 0..2 {
        for jj in 0..2 {
            gamma[i][jj] = stiff[i][jj];
            for m in 0..2 {
                beta[i][jj][m] = stiff[g(i, m)][jj];
                for n in 0..2 {
                    alpha[i][jj][m][n] = stiff[g(i, m)][g(jj, n)];
                }
            }
        }
    }
    EffectiveBlock {
        block: basis.block,
        area: T::of(t.area(grid.h())),
        eps,
        present: basis.present,
        alpha,
        beta,
        gamma,
        mass,
    }
}

/// Effective coefficient dump, one block after another, 17 significant digits.
pub fn write_coefficients<T: Scalar>(
    blocks: &[EffectiveBlock<T>],
    path: impl AsRef<Path>,
) -> Result<(), UpscaleError> {
    let mut s = String::new();
    for b in blocks {
        let f = |v: T| format!("{:.16e}", v.to_f64_lossy());
        let _ = writeln!(
            s,
            "block {} area {} eps {} present {} {}",
            b.block,
            f(b.area),
            f(b.eps),
            b.present[0] as u8,
            b.present[1] as u8
        );
        for i in 0..2 {
            for j in 0..2 {
                let _ = writeln!(s, "m {i} {j} {} {}", f(b.mass[i][j]), f(b.mass_hat(i, j)));
                let _ = writeln!(
                    s,
                    "gamma {i} {j} {} {}",
                    f(b.gamma[i][j]),
                    f(b.gamma_hat(i, j))
                );
                for m in 0..2 {
                    let _ = writeln!(
                        s,
                        "beta {i} {j} {} {} {}",
                        m + 1,
                        f(b.beta[i][j][m]),
                        f(b.beta_hat(i, j, m))
                    );
                }
                for m in 0..2 {
                    for n in 0..2 {
                        let _ = writeln!(
                            s,
                            "alpha {i} {j} {} {} {} {}",
                            m + 1,
                            n + 1,
                            f(b.alpha[i][j][m][n]),
                            f(b.alpha_hat(i, j, m, n))
                        );
                    }
                }
            }
        }
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Coarse two-continuum model `M D_t^α U + A U = F`.
///
/// Unknowns are nodal values of a bilinear field per continuum on the coarse
/// grid. Boundary nodes (homogeneous Dirichlet) and nodes whose adjacent
/// blocks all lack a continuum carry no unknown for it.
#[derive(Debug)]
pub struct CoarseModel<T> {
    partition: CoarsePartition,
    /// `dof_of[i * nodes + p]`.
    dof_of: Vec<Option<usize>>,
    /// `(continuum, coarse node)` of every unknown.
    dofs: Vec<(usize, usize)>,
    pub mass: SparseMatrix<T>,
    pub stiffness: SparseMatrix<T>,
    eig: OnceLock<Result<Eigendecomposition<T>, crate::solver::SolverError>>,
}

/// Reference-square shape gradients `(∂N/∂s, ∂N/∂t)`.
fn shape_grad(s: f64, t: f64) -> [[f64; 4]; 2] {
    [[-(1.0 - t), 1.0 - t, t, -t], [-(1.0 - s), -s, s, 1.0 - s]]
}

/// Assembles `M` and `A` from the effective coefficients (bilinear coarse
/// elements, 2×2 Gauss points, coefficients constant per block).
pub fn assemble_coarse<T: Scalar>(
    partition: &CoarsePartition,
    blocks: &[EffectiveBlock<T>],
) -> Result<CoarseModel<T>, UpscaleError> {
    let nb = partition.block_count();
    if blocks.len() != nb {
        return Err(UpscaleError::Dimension {
            expected: nb,
            got: blocks.len(),
        });
    }
    if let Some((b, eb)) = blocks.iter().enumerate().find(|(b, eb)| eb.block != *b) {
        return Err(UpscaleError::Coarse(format!(
            "effective block {} stored at position {b}",
            eb.block
        )));
    }
    let nodes = partition.coarse_node_count();
    let mut active = vec![false; 2 * nodes];
    for eb in blocks {
        for (c, &present) in eb.present.iter().enumerate() {
            if present {
                for p in partition.block_nodes(eb.block) {
                    if !partition.is_coarse_boundary(p) {
                        active[c * nodes + p] = true;
                    }
                }
            }
        }
    }
    let mut dof_of = vec![None; 2 * nodes];
    let mut dofs = Vec::new();
    for (k, &a) in active.iter().enumerate() {
        if a {
            dof_of[k] = Some(dofs.len());
            dofs.push((k / nodes, k % nodes));
        }
    }
    if dofs.is_empty() {
        return Err(UpscaleError::Coarse("no interior coarse unknowns".into()));
    }
    let hc = partition.coarse_h();
    let w = 0.25 * hc * hc;
    let element = |eb: &EffectiveBlock<T>| {
        let mut me = [[T::zero(); 8]; 8];
        let mut ae = [[T::zero(); 8]; 8];
        let inv_eps = T::one() / eb.eps;
        for &s in &GAUSS2 {
            for &t in &GAUSS2 {
                let nv = shape(s, t).map(T::of);
                let gr = shape_grad(s, t).map(|r| r.map(|v| T::of(v / hc)));
                let wt = T::of(w);
                // row: test (j, b); column: trial (i, a)
                for j in 0..2 {
                    for b in 0..4 {
                        for i in 0..2 {
                            for a in 0..4 {
                                let mut v = eb.gamma_hat(i, j) * inv_eps * inv_eps * nv[a] * nv[b];
                                for m in 0..2 {
                                    v = v + eb.beta_hat(i, j, m) * inv_eps * gr[m][a] * nv[b];
                                    v = v + eb.beta_hat(j, i, m) * inv_eps * nv[a] * gr[m][b];
                                    for n in 0..2 {
                                        v = v + eb.alpha_hat(i, j, m, n) * gr[m][a] * gr[n][b];
                                    }
                                }
                                ae[4 * j + b][4 * i + a] = ae[4 * j + b][4 * i + a] + wt * v;
                                me[4 * j + b][4 * i + a] = me[4 * j + b][4 * i + a]
                                    + wt * eb.mass_hat(i, j) * nv[a] * nv[b];
                            }
                        }
                    }
                }
            }
        }
        (me, ae)
    };
    let elements: Vec<_> = blocks.par_iter().map(element).collect();
    let mut mt = Vec::new();
    let mut at = Vec::new();
    for (eb, (me, ae)) in blocks.iter().zip(&elements) {
        let bn = partition.block_nodes(eb.block);
        let idx: Vec<Option<usize>> = (0..8)
            .map(|k| dof_of[(k / 4) * nodes + bn[k % 4]])
            .collect();
        for r in 0..8 {
            let Some(gr) = idx[r] else { continue };
            for c in 0..8 {
                let Some(gc) = idx[c] else { continue };
                mt.push((gr, gc, me[r][c]));
                at.push((gr, gc, ae[r][c]));
            }
        }
    }
    let n = dofs.len();
    let mass = symmetrized(SparseMatrix::from_triplets(n, n, &mt));
    let stiffness = symmetrized(SparseMatrix::from_triplets(n, n, &at));
    Ok(CoarseModel {
        partition: partition.clone(),
        dof_of,
        dofs,
        mass,
        stiffness,
        eig: OnceLock::new(),
    })
}

/// `(A + Aᵀ)/2`, removing round-off asymmetry of the assembled element sums.
fn symmetrized<T: Scalar>(a: SparseMatrix<T>) -> SparseMatrix<T> {
    let t = a.transpose();
    a.linear_combination(T::of(0.5), &t, T::of(0.5))
}

impl<T: Scalar> CoarseModel<T> {
    pub fn dim(&self) -> usize {
        self.dofs.len()
    }

    pub fn partition(&self) -> &CoarsePartition {
        &self.partition
    }

    /// `(continuum, coarse node)` of every unknown.
    pub fn dofs(&self) -> &[(usize, usize)] {
        &self.dofs
    }

    pub fn dof(&self, continuum: usize, node: usize) -> Option<usize> {
        self.dof_of[continuum * self.partition.coarse_node_count() + node]
    }

    /// Number of `(continuum, interior node)` pairs without an unknown.
    pub fn masked_count(&self) -> usize {
        let nodes = self.partition.coarse_node_count();
        (0..2 * nodes)
            .filter(|&k| self.dof_of[k].is_none() && !self.partition.is_coarse_boundary(k % nodes))
            .count()
    }

    /// Generalized eigendecomposition of `(A, M)`, computed once.
    pub fn eigen(&self) -> Result<&Eigendecomposition<T>, UpscaleError> {
        self.eig
            .get_or_init(|| generalized_eigen(&self.stiffness, &self.mass))
            .as_ref()
            .map_err(|e| UpscaleError::Eigen(e.clone()))
    }

    /// Full nodal fields `[U_0, U_1]` (zero where there is no unknown).
    pub fn nodal_fields(&self, u: &[T]) -> Result<[Vec<T>; 2], UpscaleError> {
        if u.len() != self.dim() {
            return Err(UpscaleError::Dimension {
                expected: self.dim(),
                got: u.len(),
            });
        }
        let nodes = self.partition.coarse_node_count();
        let mut out = [vec![T::zero(); nodes], vec![T::zero(); nodes]];
        for (&(c, p), &v) in self.dofs.iter().zip(u) {
            out[c][p] = v;
        }
        Ok(out)
    }

    /// Value and gradient of continuum field `c` at the center of every block.
    pub fn block_center_values(&self, u: &[T]) -> Result<[Vec<(T, [T; 2])>; 2], UpscaleError> {
        let fields = self.nodal_fields(u)?;
        let hc = T::of(self.partition.coarse_h());
        let half = T::of(0.5);
        let quarter = T::of(0.25);
        let per = |f: &[T]| -> Vec<(T, [T; 2])> {
            (0..self.partition.block_count())
                .map(|b| {
                    let [p0, p1, p2, p3] = self.partition.block_nodes(b).map(|p| f[p]);
                    let v = (p0 + p1 + p2 + p3) * quarter;
                    let dx = ((p1 - p0) + (p2 - p3)) * half / hc;
                    let dy = ((p3 - p0) + (p2 - p1)) * half / hc;
                    (v, [dx, dy])
                })
                .collect()
        };
        Ok([per(&fields[0]), per(&fields[1])])
    }

    /// Load of nodal block weights: unknown `(j, p)` receives
    /// `Σ_{K ∋ p} w[K][j] ∫_K N_p` (`∫_K N_p = |K|/4`).
    fn load_from_block_weights(&self, weights: &[[T; 2]]) -> Vec<T> {
        let nodes = self.partition.coarse_node_count();
        let quarter = T::of(0.25 * self.partition.block_area());
        let mut out = vec![T::zero(); self.dim()];
        for (b, w) in weights.iter().enumerate() {
            for p in self.partition.block_nodes(b) {
                for (j, &wj) in w.iter().enumerate() {
                    if let Some(d) = self.dof_of[j * nodes + p] {
                        out[d] = out[d] + wj * quarter;
                    }
                }
            }
        }
        out
    }

    /// Coarse coefficients of a pointwise function by `M U = b(g)`, with the
    /// load of [`assemble_coarse_load`].
    pub fn project(
        &self,
        grid: &FineGrid,
        bases: &[CellBasis<T>],
        g: impl Fn(f64, f64) -> f64 + Sync,
    ) -> Result<Vec<T>, UpscaleError> {
        let b = assemble_coarse_load(grid, self, bases, g)?;
        let chol = SkylineCholesky::factor(&self.mass)
            .map_err(|e| UpscaleError::Coarse(format!("mass matrix: {e}")))?;
        Ok(chol.solve(&b))
    }
}

/// Coarse load: unknown `(j, p)` receives `Σ_K f̄_j(K) ∫_K N_p` with the
/// `φ_j`-weighted block average `f̄_j(K) = |K|⁻¹ ∫_K f φ_j`.
pub fn assemble_coarse_load<T: Scalar>(
    grid: &FineGrid,
    model: &CoarseModel<T>,
    bases: &[CellBasis<T>],
    f: impl Fn(f64, f64) -> f64 + Sync,
) -> Result<Vec<T>, UpscaleError> {
    let nb = model.partition.block_count();
    if bases.len() != nb {
        return Err(UpscaleError::Dimension {
            expected: nb,
            got: bases.len(),
        });
    }
    let h = grid.h();
    let weights: Vec<[T; 2]> = bases
        .par_iter()
        .map(|basis| {
            let t = &basis.target;
            let mut acc = [0.0f64; 2];
            for j in t.j0..t.j1 {
                for i in t.i0..t.i1 {
                    let nodes = basis.region.local_cell_nodes(i, j);
                    for &s in &GAUSS2 {
                        for &q in &GAUSS2 {
                            let fv = f((i as f64 + s) * h, (j as f64 + q) * h);
                            if fv == 0.0 {
                                continue;
                            }
                            let n = shape(s, q);
                            for (c, a) in acc.iter_mut().enumerate() {
                                let phi: f64 = (0..4)
                                    .map(|k| n[k] * basis.phi[c][nodes[k]].to_f64_lossy())
                                    .sum();
                                *a += fv * phi;
                            }
                        }
                    }
                }
            }
            // 2×2 Gauss weight h²/4, then divide by |K|
            let scale = 0.25 * h * h / t.area(h);
            acc.map(|a| T::of(a * scale))
        })
        .collect();
    Ok(model.load_from_block_weights(&weights))
}

/// Fine field reconstructed from coarse unknowns, blockwise
/// `Σ_i φ_i U_i(x_K) + φ_i^m ∂_m U_i(x_K)` with `x_K` the block center.
#[derive(Debug, Clone)]
pub struct Downscaled<T> {
    /// Nodal values on each block (local node numbering of the block),
    /// discontinuous across block faces.
    pub blocks: Vec<Vec<T>>,
    /// Continuous nodal field: average over the blocks sharing a node.
    pub nodal: Vec<T>,
}

impl<T: Scalar> Downscaled<T> {
    /// Value at the midpoint of every fine cell, from its own block.
    pub fn cell_values(&self, grid: &FineGrid, partition: &CoarsePartition) -> Vec<T> {
        let quarter = T::of(0.25);
        (0..grid.cell_count())
            .map(|c| {
                let b = partition.block_of_cell(grid, c);
                let rect = partition.block_rect(b);
                let (i, j) = grid.cell_ij(c);
                rect.local_cell_nodes(i, j)
                    .iter()
                    .fold(T::zero(), |s, &l| s + self.blocks[b][l])
                    * quarter
            })
            .collect()
    }
}

pub fn downscale<T: Scalar>(
    grid: &FineGrid,
    model: &CoarseModel<T>,
    bases: &[CellBasis<T>],
    u: &[T],
) -> Result<Downscaled<T>, UpscaleError> {
    let partition = &model.partition;
    if bases.len() != partition.block_count() {
        return Err(UpscaleError::Dimension {
            expected: partition.block_count(),
            got: bases.len(),
        });
    }
    let centers = model.block_center_values(u)?;
    let blocks: Vec<Vec<T>> = bases
        .par_iter()
        .map(|basis| {
            let b = basis.block;
            let t = partition.block_rect(b);
            let mut out = vec![T::zero(); t.node_count()];
            for j in t.j0..=t.j1 {
                for i in t.i0..=t.i1 {
                    let l = basis.region.local_node(i, j);
                    let mut v = T::zero();
                    for c in 0..2 {
                        let (val, grad) = centers[c][b];
                        v = v + basis.phi[c][l] * val;
                        for m in 0..2 {
                            v = v + basis.phi_grad[c][m][l] * grad[m];
                        }
                    }
                    out[t.local_node(i, j)] = v;
                }
            }
            out
        })
        .collect();
    let mut nodal = vec![T::zero(); grid.node_count()];
    let mut count = vec![0usize; grid.node_count()];
    for (b, vals) in blocks.iter().enumerate() {
        let t = partition.block_rect(b);
        for (l, &v) in vals.iter().enumerate() {
            let p = t.global_node(grid, l);
            nodal[p] = nodal[p] + v;
            count[p] += 1;
        }
    }
    for (v, &c) in nodal.iter_mut().zip(&count) {
        *v = *v / T::of_usize(c);
    }
    Ok(Downscaled { blocks, nodal })
}
