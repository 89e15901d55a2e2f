//! Thin singular value decomposition via the Gram matrix.
//!
//! `a = u * diag(s) * vt` with `k = min(rows, cols)` retained columns. The
//! eigendecomposition runs on the smaller of `a' a` and `a a'`, so the Jacobi
//! size cap applies to `min(rows, cols)` only; the other dimension may be
//! large. Squaring the condition number is acceptable at this precision
//! because downstream consumers (PCA) discard components with tiny singular
//! values anyway.

use super::{eig_sym, Matrix, NumericsError};

#[derive(Debug, Clone)]
pub struct SvdThin {
    /// rows x k, orthonormal columns (zero columns where s underflows).
    pub u: Matrix,
    /// Singular values, descending, non-negative. Length k.
    pub s: Vec<f64>,
    /// k x cols, orthonormal rows (zero rows where s underflows).
    pub vt: Matrix,
}

pub fn svd_thin(a: &Matrix) -> Result<SvdThin, NumericsError> {
    a.ensure_finite()?;
    let (m, n) = (a.rows(), a.cols());
    let k = m.min(n);
    if k == 0 {
        return Ok(SvdThin { u: Matrix::zeros(m, 0), s: vec![], vt: Matrix::zeros(0, n) });
    }

    let tall = n <= m;
    // Gram matrix on the smaller side; exact symmetrization happens in eig_sym.
    let gram = if tall {
        let at = a.transpose();
        at.matmul(a)
    } else {
        a.matmul(&a.transpose())
    };
    let eig = eig_sym(&gram)?;

    let s: Vec<f64> = eig.values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let cutoff = s.first().copied().unwrap_or(0.0) * 1e-300;

    if tall {
        // columns of V from the Gram eigenvectors, u_i = A v_i / s_i
        let v = eig.vectors; // n x k (k == n here)
        let av = a.matmul(&v); // m x k
        let mut u = Matrix::zeros(m, k);
        for j in 0..k {
            if s[j] > cutoff && s[j] > 0.0 {
                for i in 0..m {
                    u[(i, j)] = av[(i, j)] / s[j];
                }
            }
        }
        Ok(SvdThin { u, s, vt: v.transpose() })
    } else {
        let u = eig.vectors; // m x k (k == m here)
        let atu = a.transpose().matmul(&u); // n x k
        let mut vt = Matrix::zeros(k, n);
        for j in 0..k {
            if s[j] > cutoff && s[j] > 0.0 {
                for i in 0..n {
                    vt[(j, i)] = atu[(i, j)] / s[j];
                }
            }
        }
        Ok(SvdThin { u, s, vt })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn reconstruct(d: &SvdThin) -> Matrix {
        let k = d.s.len();
        let mut us = Matrix::zeros(d.u.rows(), k);
        for i in 0..d.u.rows() {
            for j in 0..k {
                us[(i, j)] = d.u[(i, j)] * d.s[j];
            }
        }
        us.matmul(&d.vt)
    }

    #[test]
    fn diagonal_matrix_singular_values() {
        let a = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 2.0]]);
        let d = svd_thin(&a).unwrap();
        assert!((d.s[0] - 3.0).abs() < 1e-12);
        assert!((d.s[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rank_one_has_single_nonzero_singular_value() {
        // outer product of (1,2,3) and (4,5): s = |x| * |y|, rank 1
        let x = [1.0, 2.0, 3.0];
        let y = [4.0, 5.0];
        let a = Matrix::from_fn(3, 2, |i, j| x[i] * y[j]);
        let d = svd_thin(&a).unwrap();
        let above: Vec<&f64> = d.s.iter().filter(|&&s| s > 1e-10).collect();
        assert_eq!(above.len(), 1);
        let expect = (14.0_f64).sqrt() * (41.0_f64).sqrt();
        assert!((d.s[0] - expect).abs() < 1e-9);
    }

    #[test]
    fn random_reconstruction_both_orientations() {
        let mut rng = Rng::new(555);
        for &(m, n) in &[(20usize, 5usize), (5, 20), (7, 7)] {
            let a = Matrix::from_fn(m, n, |_, _| rng.uniform(-2.0, 2.0));
            let d = svd_thin(&a).unwrap();
            let norm = a.frobenius_norm();
            let err = reconstruct(&d).max_abs_diff(&a);
            assert!(err <= 1e-8 * norm, "({m},{n}): err {err}, norm {norm}");
            for w in d.s.windows(2) {
                assert!(w[0] >= w[1]);
            }
            assert!(d.s.iter().all(|&s| s >= 0.0));
        }
    }

    #[test]
    fn zero_matrix_is_handled() {
        let a = Matrix::zeros(4, 3);
        let d = svd_thin(&a).unwrap();
        assert!(d.s.iter().all(|&s| s == 0.0));
        assert_eq!(reconstruct(&d).max_abs_diff(&a), 0.0);
    }
}
