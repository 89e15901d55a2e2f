//! Confusion counting and the symmetric affinity derived from it.

use crate::numerics::Matrix;

use super::LabelExpError;

/// Raw confusion counts: entry (i, j) is how many samples of true class `i`
/// were predicted as class `j`. Every class must appear among the true
/// labels, otherwise its affinity row would be meaningless.
pub fn confusion_counts(
    true_labels: &[usize],
    predicted: &[usize],
    num_classes: usize,
) -> Result<Matrix, LabelExpError> {
    if true_labels.len() != predicted.len() {
        return Err(LabelExpError::BadInput(format!(
            "{} true labels but {} predictions",
            true_labels.len(),
            predicted.len()
        )));
    }
    if true_labels.is_empty() {
        return Err(LabelExpError::BadInput("no samples".into()));
    }
    if num_classes < 2 {
        return Err(LabelExpError::BadInput("need at least 2 classes".into()));
    }
    let mut m = Matrix::zeros(num_classes, num_classes);
    for (&t, &p) in true_labels.iter().zip(predicted) {
        if t >= num_classes || p >= num_classes {
            return Err(LabelExpError::BadInput(format!("label ({t}, {p}) out of range")));
        }
        m[(t, p)] += 1.0;
    }
    for i in 0..num_classes {
        if (0..num_classes).all(|j| m[(i, j)] == 0.0) {
            return Err(LabelExpError::EmptyClass(i));
        }
    }
    Ok(m)
}

/// Scales each row to sum to one, turning counts into misclassification
/// rates so classes with different sample counts compare fairly.
pub fn row_normalize(counts: &Matrix) -> Matrix {
    let mut out = counts.clone();
    for i in 0..out.rows() {
        let sum: f64 = (0..out.cols()).map(|j| out[(i, j)]).sum();
        if sum > 0.0 {
            for j in 0..out.cols() {
                out[(i, j)] /= sum;
            }
        }
    }
    out
}

/// `(F + F^T) / 2`: the order-free affinity between classes.
pub fn symmetrize(f: &Matrix) -> Matrix {
    assert_eq!(f.rows(), f.cols(), "confusion matrix must be square");
    let n = f.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            d[(i, j)] = 0.5 * (f[(i, j)] + f[(j, i)]);
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_hand_tally() {
        let t = vec![0, 0, 1, 1, 2, 2, 2];
        let p = vec![0, 1, 1, 1, 2, 0, 2];
        let m = confusion_counts(&t, &p, 3).unwrap();
        assert_eq!(m[(0, 0)], 1.0);
        assert_eq!(m[(0, 1)], 1.0);
        assert_eq!(m[(1, 1)], 2.0);
        assert_eq!(m[(2, 0)], 1.0);
        assert_eq!(m[(2, 2)], 2.0);
        assert_eq!(m[(1, 0)], 0.0);
    }

    #[test]
    fn absent_class_is_an_error() {
        let t = vec![0, 0, 2];
        let p = vec![0, 0, 2];
        match confusion_counts(&t, &p, 3) {
            Err(LabelExpError::EmptyClass(1)) => {}
            other => panic!("expected EmptyClass(1), got {other:?}"),
        }
    }

    #[test]
    fn row_normalize_makes_rows_stochastic() {
        let t = vec![0, 0, 0, 0, 1];
        let p = vec![0, 0, 1, 1, 1];
        let m = row_normalize(&confusion_counts(&t, &p, 2).unwrap());
        assert_eq!(m[(0, 0)], 0.5);
        assert_eq!(m[(0, 1)], 0.5);
        assert_eq!(m[(1, 1)], 1.0);
    }

    #[test]
    fn symmetrize_is_exact_and_symmetric() {
        let f = Matrix::from_rows(&[vec![0.0, 0.25, 0.75], vec![0.5, 0.0, 0.5], vec![0.1, 0.3, 0.6]]);
        let d = symmetrize(&f);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(d[(i, j)], 0.5 * (f[(i, j)] + f[(j, i)]));
                assert_eq!(d[(i, j)], d[(j, i)]);
            }
        }
        assert_eq!(d[(0, 1)], 0.375);
    }

    #[test]
    fn symmetrize_fixes_symmetric_input() {
        let f = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 2.0]]);
        assert_eq!(symmetrize(&f), f);
    }
}
