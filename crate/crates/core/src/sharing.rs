//! Cluster-local tag completion by neighbor voting.
//!
//! Inside a cluster every candidate (image, tag) pair is scored from three
//! signals, each min-max normalized over the cluster block:
//!
//! * local frequency: similarity-weighted share of the image's nearest
//!   in-cluster neighbors that carry the tag;
//! * co-occurrence: `max` over the image's own tags `t'` of the add-one
//!   smoothed estimate of `P(t | t')` within the cluster;
//! * frequency: share of the cluster's images carrying the tag.
//!
//! The score is the weighted average of the three. Nothing outside the cluster
//! is consulted.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::subspace::ClusterAssignment;
use crate::tagmat::{rank_desc, SimilarityGraph, TagMatrix};

/// Which image graph ranks voting neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum NeighborSource {
    /// The subspace-clustering affinity `|Z| + |Z^T|`.
    #[default]
    Affinity,
    /// Rectified cosine similarity of image features.
    Cosine,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SharingConfig {
    pub n_neighbors: usize,
    pub w_local: f64,
    pub w_cooc: f64,
    pub w_freq: f64,
    pub max_added_per_image: usize,
    pub min_confidence: f64,
    pub neighbor_source: NeighborSource,
}

impl Default for SharingConfig {
    fn default() -> Self {
        Self {
            n_neighbors: 10,
            w_local: 0.5,
            w_cooc: 0.3,
            w_freq: 0.2,
            max_added_per_image: 5,
            min_confidence: 0.5,
            neighbor_source: NeighborSource::Affinity,
        }
    }
}

impl SharingConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, w) in [
            ("sharing.w_local", self.w_local),
            ("sharing.w_cooc", self.w_cooc),
            ("sharing.w_freq", self.w_freq),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(invalid(field, "must be nonnegative and finite"));
            }
        }
        if !(self.w_local + self.w_cooc + self.w_freq > 0.0) {
            return Err(invalid("sharing.w_local", "the three weights must not all be zero"));
        }
        if self.min_confidence.is_nan() {
            return Err(invalid("sharing.min_confidence", "must be a number"));
        }
        Ok(())
    }
}

/// Per-component values of one cluster block (rows: members, cols: tags).
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentScores {
    pub local: DMatrix<f64>,
    pub cooc: DMatrix<f64>,
    pub freq: DMatrix<f64>,
}

/// Raw, unnormalized component values for a cluster.
///
/// `tags` holds the member rows only; `sims` is the similarity graph
/// restricted to the same members in the same order.
pub fn component_scores(tags: &TagMatrix, sims: &SimilarityGraph, n_neighbors: usize) -> Result<ComponentScores> {
    let m = tags.n_images();
    let n_t = tags.n_tags();
    if sims.size() != m {
        return Err(Error::DimensionMismatch {
            context: "cluster similarity graph",
            expected: m,
            found: sims.size(),
        });
    }
    let dense = tags.to_dense();

    // (a) local frequency
    let mut local = DMatrix::zeros(m, n_t);
    for i in 0..m {
        let mut others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| {
            sims.weight(i, b)
                .partial_cmp(&sims.weight(i, a))
                .unwrap_or(core::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        others.truncate(n_neighbors);
        if others.is_empty() {
            continue;
        }
        let total: f64 = others.iter().map(|&j| sims.weight(i, j)).sum();
        for t in 0..n_t {
            local[(i, t)] = if total > 0.0 {
                others.iter().map(|&j| sims.weight(i, j) * dense[(j, t)]).sum::<f64>() / total
            } else {
                others.iter().map(|&j| dense[(j, t)]).sum::<f64>() / others.len() as f64
            };
        }
    }

    // (b) co-occurrence, add-one smoothed: (n(t, t') + 1) / (n(t') + 2)
    let counts = dense.transpose() * &dense;
    let tag_mass: Vec<f64> = (0..n_t).map(|t| dense.column(t).sum()).collect();
    let mut cooc = DMatrix::zeros(m, n_t);
    for i in 0..m {
        let (own, own_vals) = tags.row(i);
        for t in 0..n_t {
            cooc[(i, t)] = own
                .iter()
                .zip(own_vals)
                .map(|(&tp, &a)| a * (counts[(t, tp)] + 1.0) / (tag_mass[tp] + 2.0))
                .fold(0.0, f64::max);
        }
    }

    // (c) cluster frequency
    let freq = DMatrix::from_fn(m, n_t, |_, t| tag_mass[t] / m as f64);
    Ok(ComponentScores { local, cooc, freq })
}

/// Min-max scales a block to `[0, 1]`; a constant block is clamped instead.
fn min_max(block: &DMatrix<f64>) -> DMatrix<f64> {
    let lo = block.min();
    let hi = block.max();
    if hi - lo > 0.0 {
        block.map(|x| (x - lo) / (hi - lo))
    } else {
        block.map(|x| x.clamp(0.0, 1.0))
    }
}

/// Scores every (member, tag) pair of one cluster; values lie in `[0, 1]`.
pub fn score_tags_in_cluster(
    tags: &TagMatrix,
    sims: &SimilarityGraph,
    config: &SharingConfig,
) -> Result<DMatrix<f64>> {
    config.validate()?;
    let c = component_scores(tags, sims, config.n_neighbors)?;
    let total = config.w_local + config.w_cooc + config.w_freq;
    let combined = (min_max(&c.local) * config.w_local
        + min_max(&c.cooc) * config.w_cooc
        + min_max(&c.freq) * config.w_freq)
        / total;
    Ok(combined.map(|x| x.clamp(0.0, 1.0)))
}

/// New entries proposed for one cluster: `(global image, tag, confidence)`.
pub fn propose_for_cluster(
    tags: &TagMatrix,
    members: &[usize],
    image_sims: &SimilarityGraph,
    config: &SharingConfig,
) -> Result<Vec<(usize, usize, f64)>> {
    if members.is_empty() {
        return Ok(Vec::new());
    }
    let block = tags.select_rows(members);
    let sims = image_sims.restrict(members);
    let scores = score_tags_in_cluster(&block, &sims, config)?;
    let mut out = Vec::new();
    for (local_i, &image) in members.iter().enumerate() {
        let row: Vec<f64> = scores.row(local_i).iter().copied().collect();
        out.extend(
            rank_desc(&row)
                .into_iter()
                .filter(|&t| !tags.contains(image, t) && row[t] > 0.0 && row[t] >= config.min_confidence)
                .take(config.max_added_per_image)
                .map(|t| (image, t, row[t])),
        );
    }
    Ok(out)
}

/// Merges per-cluster proposals into the input matrix. Existing entries are
/// kept unchanged.
pub fn merge_proposals(
    tags: &TagMatrix,
    proposals: impl IntoIterator<Item = Vec<(usize, usize, f64)>>,
) -> Result<TagMatrix> {
    let mut triplets: Vec<(usize, usize, f64)> = tags.iter().collect();
    for p in proposals {
        triplets.extend(p);
    }
    TagMatrix::from_triplets(tags.n_images(), tags.n_tags(), triplets)
}

/// Checks that labels and the similarity graph match the tag matrix.
pub fn check_share_inputs(tags: &TagMatrix, clusters: &ClusterAssignment, image_sims: &SimilarityGraph) -> Result<()> {
    if clusters.labels.len() != tags.n_images() {
        return Err(Error::DimensionMismatch {
            context: "cluster labels",
            expected: tags.n_images(),
            found: clusters.labels.len(),
        });
    }
    if image_sims.size() != tags.n_images() {
        return Err(Error::DimensionMismatch {
            context: "image similarity graph",
            expected: tags.n_images(),
            found: image_sims.size(),
        });
    }
    if let Some(&bad) = clusters.labels.iter().find(|&&l| l >= clusters.k) {
        return Err(Error::DimensionMismatch {
            context: "cluster label range",
            expected: clusters.k,
            found: bad,
        });
    }
    Ok(())
}

/// Completes the tag matrix cluster by cluster.
///
/// Per image, up to `max_added_per_image` absent tags whose score reaches
/// `min_confidence` are added at their score. Existing entries are untouched.
pub fn share_tags(
    tags: &TagMatrix,
    clusters: &ClusterAssignment,
    image_sims: &SimilarityGraph,
    config: &SharingConfig,
) -> Result<TagMatrix> {
    share_tags_with(tags, clusters, image_sims, config, |clusters, propose| {
        clusters.iter().map(propose).collect()
    })
}

/// Proposals of one cluster, as produced by [`propose_for_cluster`].
pub type Proposals = Result<Vec<(usize, usize, f64)>>;

/// [`share_tags`] with a caller-supplied map over the clusters' member lists.
///
/// `map` must return one result per cluster, in cluster order; it may run the
/// closure it is given concurrently. The merge is independent of scheduling.
pub fn share_tags_with<M>(
    tags: &TagMatrix,
    clusters: &ClusterAssignment,
    image_sims: &SimilarityGraph,
    config: &SharingConfig,
    map: M,
) -> Result<TagMatrix>
where
    M: FnOnce(&[Vec<usize>], &(dyn Fn(&Vec<usize>) -> Proposals + Sync)) -> Vec<Proposals>,
{
    config.validate()?;
    check_share_inputs(tags, clusters, image_sims)?;
    let members = clusters.members();
    let propose = |m: &Vec<usize>| propose_for_cluster(tags, m, image_sims, config);
    let proposals = map(&members, &propose);
    if proposals.len() != members.len() {
        return Err(Error::DimensionMismatch {
            context: "per-cluster proposals",
            expected: members.len(),
            found: proposals.len(),
        });
    }
    merge_proposals(tags, proposals.into_iter().collect::<Result<Vec<_>>>()?)
}
