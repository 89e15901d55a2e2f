//! Principal-component compression of fused feature rows.

use crate::numerics::{svd_thin, Matrix};

use super::FusionError;

/// Linear map fitted on training rows: subtract the column means, then
/// project onto the leading principal directions that together cover at
/// least the requested variance share.
#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `k x d`, rows orthonormal, strongest direction first.
    pub basis: Matrix,
    /// Variance share of each kept direction.
    pub explained: Vec<f64>,
    /// Total share the kept directions cover.
    pub covered: f64,
}

/// Fits the projection on `x` (one row per sample). `min_variance` in
/// `(0, 1]` sets how much of the total variance the kept directions must
/// cover; the smallest such count is kept.
pub fn pca_fit(x: &Matrix, min_variance: f64) -> Result<Pca, FusionError> {
    if !min_variance.is_finite() || min_variance <= 0.0 || min_variance > 1.0 {
        return Err(FusionError::BadInput(format!(
            "variance share {min_variance} outside (0, 1]"
        )));
    }
    let (n, d) = (x.rows(), x.cols());
    if n < 2 || d == 0 {
        return Err(FusionError::BadInput(format!(
            "cannot fit on a {n}x{d} feature matrix"
        )));
    }

    let mean: Vec<f64> = (0..d)
        .map(|j| (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64)
        .collect();
    let centered = Matrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let dec = svd_thin(&centered)?;

    let total: f64 = dec.s.iter().map(|s| s * s).sum();
    if total <= 0.0 {
        return Err(FusionError::DegenerateFeatures(
            "all rows are identical, no variance to keep".into(),
        ));
    }
    let ratios: Vec<f64> = dec.s.iter().map(|s| s * s / total).collect();
    let mut k = ratios.len();
    let mut cum = 0.0;
    for (i, r) in ratios.iter().enumerate() {
        cum += r;
        if cum >= min_variance {
            k = i + 1;
            break;
        }
    }

    let basis = Matrix::from_fn(k, d, |i, j| dec.vt[(i, j)]);
    let explained = ratios[..k].to_vec();
    let covered = explained.iter().sum();
    Ok(Pca { mean, basis, explained, covered })
}

impl Pca {
    /// Output dimensionality.
    pub fn dim(&self) -> usize {
        self.basis.rows()
    }

    /// Projects rows of `x` into the fitted space.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix, FusionError> {
        let d = self.mean.len();
        if x.cols() != d {
            return Err(FusionError::BadInput(format!(
                "rows have {} features, the projection was fitted on {d}",
                x.cols()
            )));
        }
        let k = self.dim();
        Ok(Matrix::from_fn(x.rows(), k, |i, j| {
            (0..d).map(|t| (x[(i, t)] - self.mean[t]) * self.basis[(j, t)]).sum()
        }))
    }
}
