use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::kmeans::kmeans;
use crate::error::{Error, Result};
use crate::tagmat::SimilarityGraph;

const KMEANS_RESTARTS: usize = 10;

/// Cluster label per image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
    /// Empty-cluster repairs performed by k-means.
    pub repairs: usize,
    /// Cluster indices left empty after the repair budget.
    pub empty_clusters: Vec<usize>,
}

impl ClusterAssignment {
    /// Builds an assignment from labels, with `k = max label + 1`.
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let k = labels.iter().copied().max().map_or(0, |m| m + 1);
        Self {
            labels,
            k,
            repairs: 0,
            empty_clusters: Vec::new(),
        }
    }

    /// Member indices of every cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = (0..self.k).map(|_| Vec::new()).collect();
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

/// Eigenpairs of `I - D^{-1/2} A D^{-1/2}`, eigenvalues ascending.
///
/// Isolated nodes get a zero row in `D^{-1/2}`.
fn normalized_laplacian_eigen(affinity: &SimilarityGraph) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let a = affinity.weights();
    let n = a.nrows();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = a.row(i).sum();
            if d > 0.0 {
                1.0 / libm::sqrt(d)
            } else {
                0.0
            }
        })
        .collect();
    let lap = DMatrix::from_fn(n, n, |i, j| {
        let off = a[(i, j)] * inv_sqrt[i] * inv_sqrt[j];
        if i == j {
            1.0 - off
        } else {
            -off
        }
    });
    let eig = lap.symmetric_eigen();
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue in normalized Laplacian"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = eig.eigenvectors.select_columns(&order);
    Ok((values, vectors))
}

/// Row-normalized matrix of the `k` bottom eigenvectors of the symmetric
/// normalized Laplacian.
pub fn spectral_embedding(affinity: &SimilarityGraph, k: usize) -> Result<DMatrix<f64>> {
    let n = affinity.size();
    if k == 0 || k > n {
        return Err(Error::DimensionMismatch {
            context: "spectral cluster count",
            expected: n,
            found: k,
        });
    }
    let (_, vectors) = normalized_laplacian_eigen(affinity)?;
    let mut embedding = vectors.columns(0, k).into_owned();
    for mut row in embedding.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    Ok(embedding)
}

/// Partitions the affinity graph into `k` clusters.
///
/// k-means runs on the row-normalized spectral embedding with farthest-point
/// seeding and 10 restarts; identical inputs and seed give identical labels.
pub fn spectral_cluster(affinity: &SimilarityGraph, k: usize, seed: u64) -> Result<ClusterAssignment> {
    let embedding = spectral_embedding(affinity, k)?;
    if k == 1 {
        return Ok(ClusterAssignment::from_labels(alloc::vec![0; affinity.size()]));
    }
    let out = kmeans(&embedding, k, KMEANS_RESTARTS, seed);
    Ok(ClusterAssignment {
        labels: out.labels,
        k,
        repairs: out.repairs,
        empty_clusters: out.empty_clusters,
    })
}

/// Estimates the number of clusters as the position of the largest gap among
/// the `k_max + 1` smallest normalized-Laplacian eigenvalues.
pub fn eigengap_k(affinity: &SimilarityGraph, k_max: usize) -> Result<usize> {
    let n = affinity.size();
    let (values, _) = normalized_laplacian_eigen(affinity)?;
    let limit = k_max.min(n.saturating_sub(1)).max(1);
    let mut best_k = 1;
    let mut best_gap = f64::NEG_INFINITY;
    for k in 1..=limit {
        let gap = values[k] - values[k - 1];
        if gap > best_gap {
            best_gap = gap;
            best_k = k;
        }
    }
    Ok(best_k)
}
