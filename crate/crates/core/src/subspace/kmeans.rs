use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng;

use crate::seeded_rng;

const MAX_LLOYD_ITERS: usize = 300;
const MAX_REPAIRS: usize = 3;

/// Result of [`kmeans`].
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansOutcome {
    pub labels: Vec<usize>,
    pub centroids: DMatrix<f64>,
    pub inertia: f64,
    /// Number of empty-cluster repairs performed in the winning restart.
    pub repairs: usize,
    /// Clusters that were still empty after the repair budget ran out.
    pub empty_clusters: Vec<usize>,
}

fn sq_dist(points: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>, c: usize) -> f64 {
    (0..points.ncols())
        .map(|d| {
            let diff = points[(i, d)] - centroids[(c, d)];
            diff * diff
        })
        .sum()
}

/// Lloyd's k-means on the rows of `points`, with `restarts` runs.
///
/// Each run picks one random row as the first centroid and adds the rest by
/// farthest-point traversal. The run with the lowest inertia wins (earliest on
/// ties). Deterministic for a given seed.
pub fn kmeans(points: &DMatrix<f64>, k: usize, restarts: usize, seed: u64) -> KMeansOutcome {
    let mut rng = seeded_rng(seed);
    let mut best: Option<KMeansOutcome> = None;
    for _ in 0..restarts.max(1) {
        let first = rng.random_range(0..points.nrows());
        let run = lloyd(points, k, first);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    best.expect("at least one restart")
}

fn farthest_point_seeds(points: &DMatrix<f64>, k: usize, first: usize) -> DMatrix<f64> {
    let n = points.nrows();
    let dim = points.ncols();
    let mut centroids = DMatrix::zeros(k, dim);
    centroids.row_mut(0).copy_from(&points.row(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centroids, 0)).collect();
    for c in 1..k {
        let mut pick = 0;
        for i in 1..n {
            if nearest[i] > nearest[pick] {
                pick = i;
            }
        }
        centroids.row_mut(c).copy_from(&points.row(pick));
        for i in 0..n {
            nearest[i] = nearest[i].min(sq_dist(points, i, &centroids, c));
        }
    }
    centroids
}

fn assign(points: &DMatrix<f64>, centroids: &DMatrix<f64>, labels: &mut [usize]) -> bool {
    let mut changed = false;
    for (i, label) in labels.iter_mut().enumerate() {
        let mut best = 0;
        let mut best_d = sq_dist(points, i, centroids, 0);
        for c in 1..centroids.nrows() {
            let d = sq_dist(points, i, centroids, c);
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        if *label != best {
            *label = best;
            changed = true;
        }
    }
    changed
}

fn lloyd(points: &DMatrix<f64>, k: usize, first: usize) -> KMeansOutcome {
    let n = points.nrows();
    let dim = points.ncols();
    let mut centroids = farthest_point_seeds(points, k, first);
    let mut labels = vec![usize::MAX; n];
    let mut repairs = 0;
    assign(points, &centroids, &mut labels);
    for _ in 0..MAX_LLOYD_ITERS {
        let mut counts = vec![0usize; k];
        let mut sums = DMatrix::<f64>::zeros(k, dim);
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            let mut row = sums.row_mut(l);
            row += points.row(i);
        }
        let mut repaired = false;
        for c in 0..k {
            if counts[c] > 0 {
                let mean = sums.row(c) / counts[c] as f64;
                centroids.row_mut(c).copy_from(&mean);
            } else if repairs < MAX_REPAIRS {
                // Re-seed at the point farthest from its own centroid.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(points, a, &centroids, labels[a])
                            .partial_cmp(&sq_dist(points, b, &centroids, labels[b]))
                            .unwrap_or(core::cmp::Ordering::Equal)
                            .then(b.cmp(&a))
                    })
                    .expect("nonempty point set");
                centroids.row_mut(c).copy_from(&points.row(far));
                repairs += 1;
                repaired = true;
            }
        }
        if !assign(points, &centroids, &mut labels) && !repaired {
            break;
        }
    }
    let mut counts = vec![0usize; k];
    labels.iter().for_each(|&l| counts[l] += 1);
    let inertia = (0..n).map(|i| sq_dist(points, i, &centroids, labels[i])).sum();
    KMeansOutcome {
        labels,
        centroids,
        inertia,
        repairs,
        empty_clusters: (0..k).filter(|&c| counts[c] == 0).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_two_blobs() {
        let pts = DMatrix::from_row_slice(6, 2, &[0.0, 0.0, 0.1, 0.0, 0.0, 0.1, 5.0, 5.0, 5.1, 5.0, 5.0, 5.1]);
        let out = kmeans(&pts, 2, 10, 7);
        assert_eq!(out.labels[0], out.labels[1]);
        assert_eq!(out.labels[0], out.labels[2]);
        assert_eq!(out.labels[3], out.labels[4]);
        assert_ne!(out.labels[0], out.labels[3]);
        assert!(out.empty_clusters.is_empty());
    }

    #[test]
    fn duplicate_points_report_empty_clusters() {
        let pts = DMatrix::from_element(4, 2, 1.0);
        let out = kmeans(&pts, 3, 2, 1);
        assert!(!out.empty_clusters.is_empty());
        assert_eq!(out.repairs, MAX_REPAIRS);
    }

    #[test]
    fn deterministic_per_seed() {
        let pts = DMatrix::from_fn(30, 3, |i, j| ((i * 7 + j * 13) % 11) as f64);
        assert_eq!(kmeans(&pts, 4, 10, 3), kmeans(&pts, 4, 10, 3));
    }
}
