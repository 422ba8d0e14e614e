use super::SolverError;
use crate::fem::SparseMatrix;
use crate::scalar::{all_finite, axpy, dot, norm2};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    /// `‖b − A x‖ / ‖b‖` at exit.
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients to relative residual `tol`.
pub fn solve_spd<T: Scalar>(a: &SparseMatrix<T>, b: &[T], tol: T) -> Result<Vec<T>, SolverError> {
    solve_spd_with(a, b, tol, None, 20 * b.len().max(10)).map(|(x, _)| x)
}

pub fn solve_spd_with<T: Scalar>(
    a: &SparseMatrix<T>,
    b: &[T],
    tol: T,
    x0: Option<&[T]>,
    max_iter: usize,
) -> Result<(Vec<T>, CgReport), SolverError> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(SolverError::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    if !all_finite(b) {
        return Err(SolverError::NonFinite);
    }
    let dinv: Vec<T> = a
        .diagonal()
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            if d > T::zero() {
                Ok(d.recip())
            } else {
                Err(SolverError::NotPositiveDefinite { index: i })
            }
        })
        .collect::<Result<_, _>>()?;
    let bnorm = norm2(b);
    let mut x = x0.map_or_else(|| vec![T::zero(); n], <[T]>::to_vec);
    if bnorm.is_zero() {
        return Ok((
            vec![T::zero(); n],
            CgReport {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let mut r: Vec<T> = a
        .mul_vec(&x)
        .iter()
        .zip(b)
        .map(|(ax, bi)| *bi - *ax)
        .collect();
    let mut z: Vec<T> = r.iter().zip(&dinv).map(|(ri, di)| *ri * *di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];
    for it in 0..=max_iter {
        let res = norm2(&r) / bnorm;
        if res <= tol {
            return Ok((
                x,
                CgReport {
                    iterations: it,
                    relative_residual: res.to_f64_lossy(),
                },
            ));
        }
        if it == max_iter {
            return Err(SolverError::NoConvergence {
                iterations: it,
                residual: res.to_f64_lossy(),
            });
        }
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(SolverError::NotPositiveDefinite { index: it });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{apply_dirichlet, assemble_load, assemble_stiffness};
    use crate::grid::{FineGrid, PermeabilityField};
    use crate::solver::SkylineCholesky;

    #[test]
    fn agrees_with_direct_solve() {
        let g = FineGrid::new(16).unwrap();
        let k = PermeabilityField::from_values(
            (0..256)
                .map(|c| if c % 7 == 0 { 1e-3 } else { 1.0 })
                .collect(),
        )
        .unwrap();
        let a = assemble_stiffness(&g, &k).unwrap();
        let b = assemble_load(&g, |x, y| x * (1.0 - y) + 0.5f64);
        let (a, b) = apply_dirichlet(&a, &b, &g.boundary_nodes());
        let (x, rep) = solve_spd_with(&a, &b, 1e-12, None, 5000).unwrap();
        assert!(rep.relative_residual <= 1e-12);
        let xd = SkylineCholesky::factor(&a).unwrap().solve(&b);
        let err = x
            .iter()
            .zip(&xd)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        let scale = xd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err <= 1e-9 * scale, "{err}");
    }

    #[test]
    fn rejects_bad_input() {
        let a = SparseMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, -1.0]]);
        assert!(solve_spd(&a, &[1.0, 1.0], 1e-12).is_err());
        let a = SparseMatrix::<f64>::identity(2);
        assert_eq!(
            solve_spd(&a, &[f64::NAN, 1.0], 1e-12).unwrap_err(),
            SolverError::NonFinite
        );
        assert!(matches!(
            solve_spd(&a, &[1.0], 1e-12),
            Err(SolverError::DimensionMismatch { .. })
        ));
        assert_eq!(solve_spd(&a, &[0.0, 0.0], 1e-12).unwrap(), vec![0.0, 0.0]);
    }
}
