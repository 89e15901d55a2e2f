//! One-vs-rest linear SVMs trained by dual coordinate descent.
//!
//! Each head solves the L2-regularized hinge-loss problem
//! `min_w 0.5*|w|^2 + C * sum_i max(0, 1 - y_i w.x_i)` in its dual:
//! coordinates are visited in a fresh random order every sweep and each
//! `alpha_i` is moved to its exact box-constrained minimizer. The bias is an
//! always-one extra feature, so it is regularized like any other weight.
//! A head stops once the duality gap falls below `tol * max(1, primal)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numerics::{Matrix, Rng};

use super::FusionError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// Hinge penalty weight.
    pub c: f64,
    /// Relative duality-gap stopping threshold.
    pub tol: f64,
    /// Sweeps allowed before a head gives up.
    pub max_sweeps: usize,
    /// Keys the per-head coordinate orders.
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig { c: 1.0, tol: 1e-6, max_sweeps: 10_000, seed: 0 }
    }
}

/// Trained one-vs-rest model over `dim`-dimensional rows.
#[derive(Debug, Clone)]
pub struct SvmModel {
    pub num_classes: usize,
    pub dim: usize,
    /// `num_classes x (dim + 1)`; the trailing column is the bias weight.
    pub weights: Matrix,
}

#[derive(Debug)]
pub struct SvmTrainReport {
    pub model: SvmModel,
    /// Dual objective after each sweep, one trace per head; non-decreasing.
    pub dual_objectives: Vec<Vec<f64>>,
    /// Final duality gap of each head.
    pub gaps: Vec<f64>,
    /// Sweeps each head ran.
    pub sweeps: Vec<usize>,
}

struct BinaryOutcome {
    weights: Vec<f64>,
    trace: Vec<f64>,
    gap: f64,
    sweeps: usize,
}

fn train_binary(
    x: &Matrix,
    labels: &[usize],
    class: usize,
    q_diag: &[f64],
    cfg: &SvmConfig,
) -> Result<BinaryOutcome, FusionError> {
    let n = x.rows();
    let d = x.cols();
    let y: Vec<f64> = labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
    let mut alpha = vec![0.0f64; n];
    let mut w = vec![0.0f64; d + 1];
    let mut rng = Rng::derive(cfg.seed, class as u64);
    let mut trace = Vec::new();
    let mut gap = f64::INFINITY;

    for sweep in 1..=cfg.max_sweeps {
        for &i in &rng.permutation(n) {
            let xi = x.row(i);
            let mut score = w[d];
            for (t, &v) in xi.iter().enumerate() {
                score += w[t] * v;
            }
            let g = y[i] * score - 1.0;
            let a = alpha[i];
            let pg = if a <= 0.0 {
                g.min(0.0)
            } else if a >= cfg.c {
                g.max(0.0)
            } else {
                g
            };
            if pg.abs() > 1e-14 {
                let next = (a - g / q_diag[i]).clamp(0.0, cfg.c);
                let step = (next - a) * y[i];
                for (t, &v) in xi.iter().enumerate() {
                    w[t] += step * v;
                }
                w[d] += step;
                alpha[i] = next;
            }
        }

        let wnorm2: f64 = w.iter().map(|v| v * v).sum();
        let mut hinge = 0.0;
        for i in 0..n {
            let mut score = w[d];
            for (t, &v) in x.row(i).iter().enumerate() {
                score += w[t] * v;
            }
            hinge += (1.0 - y[i] * score).max(0.0);
        }
        let primal = 0.5 * wnorm2 + cfg.c * hinge;
        let dual = alpha.iter().sum::<f64>() - 0.5 * wnorm2;
        trace.push(dual);
        gap = primal - dual;
        if gap <= cfg.tol * primal.abs().max(1.0) {
            return Ok(BinaryOutcome { weights: w, trace, gap, sweeps: sweep });
        }
    }
    Err(FusionError::SvmDidNotConverge { class, gap })
}

/// Trains one head per class on the rows of `x`.
pub fn svm_train(
    x: &Matrix,
    labels: &[usize],
    num_classes: usize,
    cfg: &SvmConfig,
) -> Result<SvmTrainReport, FusionError> {
    let n = x.rows();
    if labels.len() != n {
        return Err(FusionError::BadInput(format!(
            "{n} rows but {} labels",
            labels.len()
        )));
    }
    if n == 0 || x.cols() == 0 {
        return Err(FusionError::BadInput("empty feature matrix".into()));
    }
    if num_classes < 2 {
        return Err(FusionError::BadInput("need at least 2 classes".into()));
    }
    if !(cfg.c.is_finite() && cfg.c > 0.0) || !(cfg.tol.is_finite() && cfg.tol > 0.0) {
        return Err(FusionError::BadInput(format!(
            "bad penalty {} or tolerance {}",
            cfg.c, cfg.tol
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(FusionError::BadInput(format!("label {bad} out of range")));
    }
    for k in 0..num_classes {
        if !labels.contains(&k) {
            return Err(FusionError::EmptyClass(k));
        }
    }
    x.ensure_finite()?;

    let q_diag: Vec<f64> = (0..n)
        .map(|i| 1.0 + x.row(i).iter().map(|v| v * v).sum::<f64>())
        .collect();

    let runs: Vec<Result<BinaryOutcome, FusionError>> = (0..num_classes)
        .into_par_iter()
        .map(|k| train_binary(x, labels, k, &q_diag, cfg))
        .collect();

    let d = x.cols();
    let mut weights = Matrix::zeros(num_classes, d + 1);
    let mut dual_objectives = Vec::with_capacity(num_classes);
    let mut gaps = Vec::with_capacity(num_classes);
    let mut sweeps = Vec::with_capacity(num_classes);
    for (k, run) in runs.into_iter().enumerate() {
        let out = run?;
        weights.row_mut(k).copy_from_slice(&out.weights);
        dual_objectives.push(out.trace);
        gaps.push(out.gap);
        sweeps.push(out.sweeps);
    }
    Ok(SvmTrainReport {
        model: SvmModel { num_classes, dim: d, weights },
        dual_objectives,
        gaps,
        sweeps,
    })
}

impl SvmModel {
    /// Per-class decision values, one row per input row.
    pub fn decision_values(&self, x: &Matrix) -> Result<Matrix, FusionError> {
        if x.cols() != self.dim {
            return Err(FusionError::BadInput(format!(
                "rows have {} features, the model was trained on {}",
                x.cols(),
                self.dim
            )));
        }
        Ok(Matrix::from_fn(x.rows(), self.num_classes, |i, k| {
            let mut s = self.weights[(k, self.dim)];
            for (t, &v) in x.row(i).iter().enumerate() {
                s += self.weights[(k, t)] * v;
            }
            s
        }))
    }

    /// Highest-scoring class per row; exact ties go to the lowest index.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>, FusionError> {
        let scores = self.decision_values(x)?;
        Ok((0..scores.rows())
            .map(|i| {
                let row = scores.row(i);
                let mut best = 0;
                for (k, &s) in row.iter().enumerate().skip(1) {
                    if s > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect())
    }
}
