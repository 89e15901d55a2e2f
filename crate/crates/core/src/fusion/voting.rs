//! Pooling patch-level scores into one decision per segment.

use std::collections::BTreeMap;

use crate::numerics::Matrix;

use super::FusionError;

/// Row-wise softmax with the usual max shift, for turning margins into
/// comparable per-row scores.
pub fn softmax_scores(scores: &Matrix) -> Matrix {
    let (n, k) = (scores.rows(), scores.cols());
    let mut out = Matrix::zeros(n, k);
    for i in 0..n {
        let row = scores.row(i);
        let top = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for j in 0..k {
            let e = (row[j] - top).exp();
            out[(i, j)] = e;
            total += e;
        }
        for j in 0..k {
            out[(i, j)] /= total;
        }
    }
    out
}

/// Votes one class per segment from per-patch score rows.
///
/// Each row votes for its highest-scoring class (row ties toward the lowest
/// index). The segment takes the most common vote; when vote counts tie, the
/// tied class with the largest score total over all of the segment's rows
/// wins, and an exact tie after that falls to the lowest class index.
/// Returns `(segment ordinal, class)` pairs sorted by segment.
pub fn majority_vote(
    segments: &[usize],
    scores: &Matrix,
) -> Result<Vec<(usize, usize)>, FusionError> {
    if segments.len() != scores.rows() {
        return Err(FusionError::BadInput(format!(
            "{} segment ids for {} score rows",
            segments.len(),
            scores.rows()
        )));
    }
    if scores.rows() == 0 || scores.cols() == 0 {
        return Err(FusionError::BadInput("no scores to vote on".into()));
    }
    scores.ensure_finite()?;

    let k = scores.cols();
    let mut rows_by_seg: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (row, &seg) in segments.iter().enumerate() {
        rows_by_seg.entry(seg).or_default().push(row);
    }

    let mut out = Vec::with_capacity(rows_by_seg.len());
    for (&seg, rows) in &rows_by_seg {
        let mut counts = vec![0usize; k];
        for &r in rows {
            let row = scores.row(r);
            let mut pred = 0;
            for (j, &s) in row.iter().enumerate().skip(1) {
                if s > row[pred] {
                    pred = j;
                }
            }
            counts[pred] += 1;
        }
        let top = *counts.iter().max().expect("k >= 1");
        let mut winner = usize::MAX;
        let mut winner_sum = f64::NEG_INFINITY;
        for j in 0..k {
            if counts[j] != top {
                continue;
            }
            let total: f64 = rows.iter().map(|&r| scores[(r, j)]).sum();
            if total > winner_sum {
                winner_sum = total;
                winner = j;
            }
        }
        out.push((seg, winner));
    }
    Ok(out)
}

/// Fraction of per-patch predictions matching their labels.
pub fn sample_accuracy(preds: &[usize], labels: &[usize]) -> f64 {
    assert_eq!(preds.len(), labels.len(), "prediction/label length mismatch");
    assert!(!preds.is_empty(), "no predictions");
    let hits = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / preds.len() as f64
}

/// Fraction of segments whose majority vote matches the segment label.
/// `labels` holds the per-row label, constant within a segment.
pub fn voted_accuracy(
    segments: &[usize],
    labels: &[usize],
    scores: &Matrix,
) -> Result<f64, FusionError> {
    if labels.len() != segments.len() {
        return Err(FusionError::BadInput(format!(
            "{} labels for {} rows",
            labels.len(),
            segments.len()
        )));
    }
    let mut seg_label: BTreeMap<usize, usize> = BTreeMap::new();
    for (&seg, &y) in segments.iter().zip(labels) {
        if *seg_label.entry(seg).or_insert(y) != y {
            return Err(FusionError::BadInput(format!("segment {seg} appears with two labels")));
        }
    }
    let votes = majority_vote(segments, scores)?;
    let hits = votes.iter().filter(|(seg, v)| seg_label[seg] == *v).count();
    Ok(hits as f64 / votes.len() as f64)
}
