//! Symmetric eigendecomposition by cyclic Jacobi rotations.
//!
//! Jacobi is slower than tridiagonalization-based solvers but is simple,
//! unconditionally stable, and gives deterministic, near-orthonormal
//! eigenvectors. Spectral clustering and PCA both work on matrices far below
//! the enforced size cap, so the O(n^3) sweeps are irrelevant here.

use super::{Matrix, NumericsError};

/// Eigenpairs of a symmetric matrix: `values[i]` descending, eigenvector `i`
/// in column `i` of `vectors`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

pub const MAX_JACOBI_SIZE: usize = 512;
const MAX_SWEEPS: usize = 100;
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Full eigendecomposition of a symmetric matrix.
///
/// Rejects non-square, non-finite and asymmetric (beyond 1e-10) input, and
/// matrices larger than 512 on a side. The returned vectors are orthonormal
/// to machine precision and `a v = lambda v` holds to ~1e-14 * ||a||.
pub fn eig_sym(a: &Matrix) -> Result<EigenDecomposition, NumericsError> {
    a.ensure_square()?;
    a.ensure_finite()?;
    a.ensure_symmetric(SYMMETRY_TOL)?;
    let n = a.rows();
    if n > MAX_JACOBI_SIZE {
        return Err(NumericsError::TooLarge(n));
    }
    if n == 0 {
        return Ok(EigenDecomposition { values: vec![], vectors: Matrix::zeros(0, 0) });
    }

    // Work on an exactly symmetric copy; the 1e-10 input slack would otherwise
    // leak into the rotations.
    let mut m = Matrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let mut v = Matrix::identity(n);
    let scale = m.frobenius_norm().max(f64::MIN_POSITIVE);

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            converged = true;
            break;
        }

        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                // tan of the annihilating rotation, smaller root for stability
                let t = if theta.abs() > 1e150 {
                    1.0 / (2.0 * theta)
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                let app = m[(p, p)];
                let aqq = m[(q, q)];
                m[(p, p)] = app - t * apq;
                m[(q, q)] = aqq + t * apq;
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for r in 0..n {
                    if r != p && r != q {
                        let arp = m[(r, p)];
                        let arq = m[(r, q)];
                        m[(r, p)] = arp - s * (arq + tau * arp);
                        m[(p, r)] = m[(r, p)];
                        m[(r, q)] = arq + s * (arp - tau * arq);
                        m[(q, r)] = m[(r, q)];
                    }
                }
                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = vrp - s * (vrq + tau * vrp);
                    v[(r, q)] = vrq + s * (vrp - tau * vrq);
                }
            }
        }
    }
    if !converged {
        // One last check: the final sweep may have finished the job.
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() > 1e-12 * scale {
            return Err(NumericsError::NoConvergence(MAX_SWEEPS));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].partial_cmp(&m[(i, i)]).unwrap());
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(EigenDecomposition { values, vectors })
}
