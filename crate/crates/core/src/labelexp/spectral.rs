//! Spectral grouping of classes from a symmetric affinity matrix.

use crate::numerics::{eig_sym, kmeans, Matrix, Rng, DEFAULT_RESTARTS};

use super::{LabelExpError, Partition};

/// Validates an affinity matrix and returns a working copy: exactly
/// symmetric, finite, non-negative, with the diagonal zeroed (self-affinity
/// carries no grouping information).
fn checked_affinity(affinity: &Matrix) -> Result<Matrix, LabelExpError> {
    if affinity.rows() != affinity.cols() {
        return Err(LabelExpError::BadInput(format!(
            "affinity is {}x{}, expected square",
            affinity.rows(),
            affinity.cols()
        )));
    }
    let c = affinity.rows();
    let mut out = Matrix::zeros(c, c);
    for i in 0..c {
        for j in 0..c {
            let v = affinity[(i, j)];
            if !v.is_finite() {
                return Err(LabelExpError::BadInput(format!("non-finite affinity at ({i}, {j})")));
            }
            if i == j {
                continue;
            }
            if v < 0.0 {
                return Err(LabelExpError::BadInput(format!("negative affinity at ({i}, {j})")));
            }
            let w = affinity[(j, i)];
            if (v - w).abs() > 1e-8 * v.abs().max(1.0) {
                return Err(LabelExpError::BadInput(format!(
                    "affinity not symmetric at ({i}, {j}): {v} vs {w}"
                )));
            }
            out[(i, j)] = 0.5 * (v + w);
        }
    }
    Ok(out)
}

fn degrees(a: &Matrix) -> Vec<f64> {
    (0..a.rows()).map(|i| a.row(i).iter().sum()).collect()
}

/// Symmetric normalized Laplacian restricted to the index set `idx`, whose
/// members must all have positive degree.
fn sym_laplacian(a: &Matrix, idx: &[usize], deg: &[f64]) -> Matrix {
    Matrix::from_fn(idx.len(), idx.len(), |p, q| {
        let (i, j) = (idx[p], idx[q]);
        let norm = a[(i, j)] / (deg[i] * deg[j]).sqrt();
        if p == q {
            1.0 - norm
        } else {
            -norm
        }
    })
}

/// Groups `affinity.rows()` classes into `n` superclasses.
///
/// Classes with zero total affinity cannot be normalized and become singleton
/// groups up front; the rest are embedded with the eigenvectors of the
/// smallest `n'` eigenvalues of the symmetric normalized Laplacian, the
/// embedding rows are scaled to unit length (all-zero rows are left alone),
/// and k-means with [`DEFAULT_RESTARTS`] restarts assigns the groups. The
/// result is canonical and a pure function of `(affinity, n, seed)`.
pub fn spectral_partition(affinity: &Matrix, n: usize, seed: u64) -> Result<Partition, LabelExpError> {
    let a = checked_affinity(affinity)?;
    let c = a.rows();
    if c < 2 {
        return Err(LabelExpError::BadInput(format!("cannot group {c} classes")));
    }
    if n < 2 || n > c {
        return Err(LabelExpError::BadSubsetCount {
            subsets: n,
            classes: c,
            why: "the count must lie in [2, number of classes]".into(),
        });
    }

    let deg = degrees(&a);
    let isolated: Vec<usize> = (0..c).filter(|&i| deg[i] <= 0.0).collect();
    let linked: Vec<usize> = (0..c).filter(|&i| deg[i] > 0.0).collect();
    if isolated.len() > n {
        return Err(LabelExpError::BadSubsetCount {
            subsets: n,
            classes: c,
            why: format!("{} zero-affinity classes already need their own groups", isolated.len()),
        });
    }
    let k = n - isolated.len();
    if k > linked.len() || (k == 0 && !linked.is_empty()) {
        return Err(LabelExpError::BadSubsetCount {
            subsets: n,
            classes: c,
            why: format!(
                "{} groups left for {} connected classes",
                k,
                linked.len()
            ),
        });
    }

    let mut assignments = vec![0usize; c];
    for (t, &i) in isolated.iter().enumerate() {
        assignments[i] = t;
    }
    if !linked.is_empty() {
        let dec = eig_sym(&sym_laplacian(&a, &linked, &deg))?;
        // eig_sym sorts descending; the last k columns span the small end
        let total = dec.vectors.cols();
        let mut emb = Matrix::from_fn(linked.len(), k, |i, j| dec.vectors[(i, total - k + j)]);
        for i in 0..emb.rows() {
            let norm: f64 = emb.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for j in 0..k {
                    emb[(i, j)] /= norm;
                }
            }
        }
        let mut rng = Rng::new(seed);
        let run = kmeans(&emb, k, &mut rng, DEFAULT_RESTARTS)?;
        for (r, &class) in linked.iter().enumerate() {
            assignments[class] = isolated.len() + run.assignments[r];
        }
    }
    Partition::from_assignments(&assignments, n)
}

/// Picks how many superclasses to form with the eigengap rule: with the
/// Laplacian spectrum sorted ascending, choose the count `k` in
/// `[2, classes - 1]` whose gap to the next eigenvalue is largest, smallest
/// `k` on ties. Zero-affinity classes count as extra zero eigenvalues, one
/// per detached class.
pub fn choose_num_superclasses(affinity: &Matrix) -> Result<usize, LabelExpError> {
    let a = checked_affinity(affinity)?;
    let c = a.rows();
    if c < 3 {
        return Err(LabelExpError::BadInput(format!(
            "need at least 3 classes to pick a count in [2, {c} - 1]"
        )));
    }
    let deg = degrees(&a);
    let linked: Vec<usize> = (0..c).filter(|&i| deg[i] > 0.0).collect();
    let mut values = vec![0.0f64; c - linked.len()];
    if !linked.is_empty() {
        let dec = eig_sym(&sym_laplacian(&a, &linked, &deg))?;
        values.extend(dec.values.iter().rev());
    }
    values.sort_by(f64::total_cmp);

    let mut best_k = 2;
    let mut best_gap = values[2] - values[1];
    for k in 3..c {
        let gap = values[k] - values[k - 1];
        if gap > best_gap {
            best_gap = gap;
            best_k = k;
        }
    }
    Ok(best_k)
}

/// Normalized cut of a partition: for each group, the affinity leaving the
/// group divided by the group's total degree, summed over groups. Groups
/// with zero volume have no edges at all and contribute nothing.
pub fn normalized_cut(affinity: &Matrix, partition: &Partition) -> Result<f64, LabelExpError> {
    let a = checked_affinity(affinity)?;
    partition.validate(a.rows())?;
    let deg = degrees(&a);
    let mut total = 0.0;
    for (m, subset) in partition.subsets.iter().enumerate() {
        let vol: f64 = subset.iter().map(|&i| deg[i]).sum();
        if vol <= 0.0 {
            continue;
        }
        let mut cut = 0.0;
        for &i in subset {
            for j in 0..a.cols() {
                if partition.class_to_super[j] != m {
                    cut += a[(i, j)];
                }
            }
        }
        total += cut / vol;
    }
    Ok(total)
}
