//! Lloyd's k-means with k-means++ seeding and restarts.

use super::{Matrix, NumericsError, Rng};

const MAX_LLOYD_ITERS: usize = 300;
pub const DEFAULT_RESTARTS: usize = 10;

#[derive(Debug, Clone)]
pub struct KmeansResult {
    pub assignments: Vec<usize>,
    /// k x dim centroid matrix of the winning restart.
    pub centers: Matrix,
    /// Sum of squared distances to assigned centroids.
    pub inertia: f64,
}

/// Clusters the rows of `points` into `k` groups.
///
/// Runs `restarts` independent k-means++ initializations and keeps the lowest
/// inertia; exact ties keep the earliest restart. Within a run, Lloyd
/// iterations stop at an assignment fixpoint or after 300 rounds. A cluster
/// that empties is re-seeded at the point farthest from its assigned centroid.
/// The outcome is a pure function of `points`, `k` and the rng state.
pub fn kmeans(
    points: &Matrix,
    k: usize,
    rng: &mut Rng,
    restarts: usize,
) -> Result<KmeansResult, NumericsError> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(NumericsError::BadClusterCount { k, n });
    }
    points.ensure_finite()?;

    let mut best: Option<KmeansResult> = None;
    for _ in 0..restarts.max(1) {
        let centers = plus_plus_init(points, k, rng);
        if let Some(run) = lloyd(points, centers) {
            let better = match &best {
                None => true,
                Some(b) => run.inertia < b.inertia,
            };
            if better {
                best = Some(run);
            }
        }
    }
    best.ok_or_else(|| {
        let distinct = count_distinct(points);
        NumericsError::DegenerateClustering { k, distinct }
    })
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus_init(points: &Matrix, k: usize, rng: &mut Rng) -> Matrix {
    let n = points.rows();
    let d = points.cols();
    let mut centers = Matrix::zeros(k, d);
    let first = rng.index(n);
    centers.row_mut(0).copy_from_slice(points.row(first));

    let mut d2: Vec<f64> = (0..n).map(|i| dist2(points.row(i), centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let chosen = if total <= 0.0 {
            // all mass at existing centers: fall back to a uniform draw
            rng.index(n)
        } else {
            let mut target = rng.next_f64() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        };
        centers.row_mut(c).copy_from_slice(points.row(chosen));
        for i in 0..n {
            let nd = dist2(points.row(i), centers.row(c));
            if nd < d2[i] {
                d2[i] = nd;
            }
        }
    }
    centers
}

/// One Lloyd run. Returns `None` when a cluster cannot be kept non-empty
/// (fewer distinct points than centers).
fn lloyd(points: &Matrix, mut centers: Matrix) -> Option<KmeansResult> {
    let trace = lloyd_traced(points, &mut centers)?;
    let (assignments, inertia) = trace.last().cloned()?;
    Some(KmeansResult { assignments, centers, inertia })
}

/// Lloyd iterations with the (assignment, inertia) pair recorded after each
/// assignment step. Exposed within the crate so tests can assert the
/// monotone descent of inertia.
pub(crate) fn lloyd_traced(
    points: &Matrix,
    centers: &mut Matrix,
) -> Option<Vec<(Vec<usize>, f64)>> {
    let n = points.rows();
    let k = centers.rows();
    let d = points.cols();
    let mut trace: Vec<(Vec<usize>, f64)> = Vec::new();
    let mut assignments = vec![0usize; n];

    for iter in 0..MAX_LLOYD_ITERS {
        let mut inertia = 0.0;
        let mut changed = false;
        for i in 0..n {
            let mut best_c = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let dd = dist2(points.row(i), centers.row(c));
                if dd < best_d {
                    best_d = dd;
                    best_c = c;
                }
            }
            if assignments[i] != best_c {
                changed = true;
                assignments[i] = best_c;
            }
            inertia += best_d;
        }
        trace.push((assignments.clone(), inertia));
        // fixpoint: assignments stable against centers that were themselves
        // computed from those assignments (needs at least one update round)
        if !changed && iter > 0 {
            break;
        }

        // centroid update
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[assignments[i]] += 1;
            let s = sums.row_mut(assignments[i]);
            for (a, b) in s.iter_mut().zip(points.row(i)) {
                *a += b;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..d {
                    centers[(c, j)] = sums[(c, j)] / counts[c] as f64;
                }
            } else {
                // re-seed an empty cluster at the point farthest from its
                // current centroid
                let mut far_i = 0;
                let mut far_d = -1.0;
                for i in 0..n {
                    let dd = dist2(points.row(i), centers.row(assignments[i]));
                    if dd > far_d {
                        far_d = dd;
                        far_i = i;
                    }
                }
                if far_d <= 0.0 {
                    // every point already sits on a centroid: fewer distinct
                    // points than clusters, this run cannot fill k clusters
                    return None;
                }
                let row = points.row(far_i).to_vec();
                centers.row_mut(c).copy_from_slice(&row);
                assignments[far_i] = c;
            }
        }
    }

    // final snapshot so the reported pair is consistent with final centers
    let mut inertia = 0.0;
    let mut counts = vec![0usize; k];
    for i in 0..n {
        let mut best_c = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..k {
            let dd = dist2(points.row(i), centers.row(c));
            if dd < best_d {
                best_d = dd;
                best_c = c;
            }
        }
        assignments[i] = best_c;
        counts[best_c] += 1;
        inertia += best_d;
    }
    if counts.iter().any(|&c| c == 0) {
        return None;
    }
    trace.push((assignments, inertia));
    Some(trace)
}

fn count_distinct(points: &Matrix) -> usize {
    let mut distinct: Vec<&[f64]> = Vec::new();
    'outer: for i in 0..points.rows() {
        let row = points.row(i);
        for &seen in &distinct {
            if seen == row {
                continue 'outer;
            }
        }
        distinct.push(row);
    }
    distinct.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_separated_pairs() {
        let pts = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![0.1, 0.0],
            vec![10.0, 10.0],
            vec![10.1, 10.0],
        ]);
        let r = kmeans(&pts, 2, &mut Rng::new(1), DEFAULT_RESTARTS).unwrap();
        assert_eq!(r.assignments[0], r.assignments[1]);
        assert_eq!(r.assignments[2], r.assignments[3]);
        assert_ne!(r.assignments[0], r.assignments[2]);
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let pts = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![5.0]]);
        let r = kmeans(&pts, 4, &mut Rng::new(3), DEFAULT_RESTARTS).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut sorted = r.assignments.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }

    #[test]
    fn recovers_three_gaussian_blobs() {
        // 30 points in 3 tight, well-separated blobs: the result must match
        // the generating labels up to a relabeling of the clusters.
        let mut rng = Rng::new(77);
        let centers = [(0.0, 0.0), (8.0, 0.0), (0.0, 8.0)];
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for (label, &(cx, cy)) in centers.iter().enumerate() {
            for _ in 0..10 {
                rows.push(vec![cx + 0.3 * rng.normal(), cy + 0.3 * rng.normal()]);
                truth.push(label);
            }
        }
        let pts = Matrix::from_rows(&rows);
        let r = kmeans(&pts, 3, &mut Rng::new(13), DEFAULT_RESTARTS).unwrap();

        let perms = [
            [0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0],
        ];
        let matched = perms.iter().any(|p| {
            truth.iter().zip(&r.assignments).all(|(&t, &a)| p[t] == a)
        });
        assert!(matched, "assignments {:?} do not match blobs {truth:?}", r.assignments);
    }

    #[test]
    fn inertia_is_monotone_within_a_run() {
        let mut rng = Rng::new(2);
        let pts = Matrix::from_fn(40, 3, |_, _| rng.uniform(0.0, 4.0));
        let mut centers = plus_plus_init(&pts, 5, &mut rng);
        let trace = lloyd_traced(&pts, &mut centers).unwrap();
        for w in trace.windows(2) {
            assert!(
                w[1].1 <= w[0].1 + 1e-9,
                "inertia increased: {} -> {}",
                w[0].1,
                w[1].1
            );
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let mut rng = Rng::new(10);
        let pts = Matrix::from_fn(25, 4, |_, _| rng.uniform(-1.0, 1.0));
        let a = kmeans(&pts, 4, &mut Rng::new(5), DEFAULT_RESTARTS).unwrap();
        let b = kmeans(&pts, 4, &mut Rng::new(5), DEFAULT_RESTARTS).unwrap();
        assert_eq!(a.assignments, b.assignments);
        assert_eq!(a.inertia.to_bits(), b.inertia.to_bits());
    }

    #[test]
    fn rejects_bad_cluster_counts() {
        let pts = Matrix::zeros(3, 2);
        assert!(matches!(
            kmeans(&pts, 0, &mut Rng::new(0), 1),
            Err(NumericsError::BadClusterCount { .. })
        ));
        assert!(matches!(
            kmeans(&pts, 4, &mut Rng::new(0), 1),
            Err(NumericsError::BadClusterCount { .. })
        ));
    }

    #[test]
    fn degenerate_duplicates_error() {
        // 4 identical points cannot form 2 non-empty distinct clusters.
        let pts = Matrix::from_rows(&vec![vec![1.0, 1.0]; 4]);
        assert!(matches!(
            kmeans(&pts, 2, &mut Rng::new(0), 3),
            Err(NumericsError::DegenerateClustering { k: 2, distinct: 1 })
        ));
    }
}
