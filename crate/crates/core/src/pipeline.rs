//! Stage wiring: cluster, share, refine, evaluate, and grid-search tuning.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use crate::error::{invalid, Result};
use crate::metrics::{ap_ar_at_n, ap_ar_at_n_for, EmptyTruthPolicy, EvalReport};
use crate::refine::{refine, RefineConfig, Refinement};
use crate::seeded_rng;
use crate::sharing::{share_tags, NeighborSource, SharingConfig};
use crate::subspace::{affinity, spectral_cluster, ssc_solve, ClusterAssignment, SelfRepresentation, SscConfig};
use crate::tagmat::{
    cosine_similarity_graph, graph_laplacian, FeatureMatrix, GraphLaplacian, Rectification, SimilarityGraph, TagMatrix,
};

/// Every knob of the full pipeline.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PipelineConfig {
    /// Number of image clusters.
    pub k: usize,
    /// Seed of the spectral k-means.
    pub cluster_seed: u64,
    pub rectification: Rectification,
    pub empty_truth: EmptyTruthPolicy,
    /// Cutoffs for AP@N / AR@N.
    pub eval_n: Vec<usize>,
    pub ssc: SscConfig,
    pub sharing: SharingConfig,
    pub refine: RefineConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: 5,
            cluster_seed: 0,
            rectification: Rectification::Clamp,
            empty_truth: EmptyTruthPolicy::Exclude,
            eval_n: vec![2, 5, 10],
            ssc: SscConfig::default(),
            sharing: SharingConfig::default(),
            refine: RefineConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Validates everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("k", "must be at least 1"));
        }
        if self.eval_n.contains(&0) {
            return Err(invalid("eval_n", "cutoffs must be at least 1"));
        }
        self.ssc.validate()?;
        self.sharing.validate()?;
        if !(self.refine.mu >= 0.0 && self.refine.mu < 1.0) {
            return Err(invalid("refine.mu", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Output of the clustering stage.
#[derive(Debug, Clone)]
pub struct ClusterStage {
    pub representation: SelfRepresentation,
    pub affinity: SimilarityGraph,
    pub assignment: ClusterAssignment,
}

pub fn cluster_stage(images: &FeatureMatrix, ssc: &SscConfig, k: usize, seed: u64) -> Result<ClusterStage> {
    let representation = ssc_solve(images, ssc)?;
    let affinity = affinity(&representation);
    let assignment = spectral_cluster(&affinity, k, seed)?;
    Ok(ClusterStage {
        representation,
        affinity,
        assignment,
    })
}

/// The image graph that ranks voting neighbors.
pub fn neighbor_graph(
    source: NeighborSource,
    affinity: &SimilarityGraph,
    images: &FeatureMatrix,
    rectification: Rectification,
) -> Result<SimilarityGraph> {
    match source {
        NeighborSource::Affinity => Ok(affinity.clone()),
        NeighborSource::Cosine => cosine_similarity_graph(images, rectification),
    }
}

/// Image and tag Laplacians from rectified cosine similarity of the features.
pub fn laplacians(
    image_features: &FeatureMatrix,
    tag_features: &FeatureMatrix,
    rectification: Rectification,
) -> Result<(GraphLaplacian, GraphLaplacian)> {
    let l_v = graph_laplacian(&cosine_similarity_graph(image_features, rectification)?)?;
    let l_s = graph_laplacian(&cosine_similarity_graph(tag_features, rectification)?)?;
    Ok((l_v, l_s))
}

/// All intermediate and final products of a pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub clusters: ClusterStage,
    pub completed: TagMatrix,
    pub refined: Refinement,
    pub reports: Vec<EvalReport>,
}

/// Cluster, share, refine and (when ground truth is given) evaluate.
pub fn run_pipeline(
    tags: &TagMatrix,
    image_features: &FeatureMatrix,
    tag_features: &FeatureMatrix,
    ground_truth: Option<&TagMatrix>,
    config: &PipelineConfig,
) -> Result<PipelineOutput> {
    config.validate()?;
    let clusters = cluster_stage(image_features, &config.ssc, config.k, config.cluster_seed)?;
    let sims = neighbor_graph(
        config.sharing.neighbor_source,
        &clusters.affinity,
        image_features,
        config.rectification,
    )?;
    let completed = share_tags(tags, &clusters.assignment, &sims, &config.sharing)?;
    let (l_v, l_s) = laplacians(image_features, tag_features, config.rectification)?;
    let refined = refine(&completed, image_features, tag_features, &l_v, &l_s, &config.refine)?;
    let reports = match ground_truth {
        Some(truth) => evaluate(&refined.scores, truth, &config.eval_n, config.empty_truth)?,
        None => Vec::new(),
    };
    Ok(PipelineOutput {
        clusters,
        completed,
        refined,
        reports,
    })
}

/// One report per cutoff.
pub fn evaluate(
    scores: &DMatrix<f64>,
    truth: &TagMatrix,
    cutoffs: &[usize],
    policy: EmptyTruthPolicy,
) -> Result<Vec<EvalReport>> {
    cutoffs.iter().map(|&n| ap_ar_at_n(scores, truth, n, policy)).collect()
}

/// Hyper-parameter grid for [`tune`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TuneGrid {
    pub rank: Vec<usize>,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub mu: Vec<f64>,
    /// Share of images (with nonempty truth) scored for selection.
    pub validation_fraction: f64,
    pub split_seed: u64,
    /// Cutoff of the AP@N selection criterion.
    pub n: usize,
}

impl Default for TuneGrid {
    fn default() -> Self {
        Self {
            rank: vec![5, 10],
            lambda1: vec![0.1, 1.0],
            lambda2: vec![0.0, 1e-4, 1e-3],
            mu: vec![0.0, 0.2, 0.4, 0.6, 0.8],
            validation_fraction: 0.3,
            split_seed: 0,
            n: 5,
        }
    }
}

impl TuneGrid {
    /// Every grid point applied to `base`, in grid order.
    pub fn configs(&self, base: &RefineConfig) -> Vec<RefineConfig> {
        let mut out = Vec::with_capacity(self.rank.len() * self.lambda1.len() * self.lambda2.len() * self.mu.len());
        for &rank in &self.rank {
            for &lambda1 in &self.lambda1 {
                for &lambda2 in &self.lambda2 {
                    for &mu in &self.mu {
                        out.push(RefineConfig {
                            rank,
                            lambda1,
                            lambda2,
                            mu,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank.is_empty() || self.lambda1.is_empty() || self.lambda2.is_empty() || self.mu.is_empty() {
            return Err(invalid("tune", "every grid axis needs at least one value"));
        }
        if self.mu.iter().any(|&m| !(0.0..1.0).contains(&m)) {
            return Err(invalid("tune.mu", "values must lie in [0, 1)"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 1.0) {
            return Err(invalid("tune.validation_fraction", "must lie in (0, 1]"));
        }
        if self.n == 0 {
            return Err(invalid("tune.n", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TunePoint {
    pub rank: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu: f64,
    pub ap: f64,
    pub ar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneReport {
    pub points: Vec<TunePoint>,
    /// Index into `points` of the highest validation AP (first on ties).
    pub best: usize,
    pub validation_images: Vec<usize>,
}

impl TuneReport {
    pub fn best_point(&self) -> &TunePoint {
        &self.points[self.best]
    }
}

/// Images scored during tuning: a seeded random share of those with truth.
pub fn validation_split(truth: &TagMatrix, fraction: f64, seed: u64) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..truth.n_images()).filter(|&i| !truth.row(i).0.is_empty()).collect();
    let mut rng = seeded_rng(seed);
    candidates.shuffle(&mut rng);
    let take = (libm::ceil(fraction * candidates.len() as f64) as usize).clamp(1, candidates.len().max(1));
    candidates.truncate(take);
    candidates.sort_unstable();
    candidates
}

/// Grid search over `(rank, lambda1, lambda2, mu)`.
///
/// Refinement sees every image's (noisy) tags; selection uses AP@N against
/// the ground truth of the validation images only. Grid order is rank,
/// lambda1, lambda2, mu, each ascending as given; the first best point wins.
#[allow(clippy::too_many_arguments)]
pub fn tune(
    tags: &TagMatrix,
    image_features: &FeatureMatrix,
    tag_features: &FeatureMatrix,
    truth: &TagMatrix,
    grid: &TuneGrid,
    base: &RefineConfig,
    rectification: Rectification,
    policy: EmptyTruthPolicy,
) -> Result<TuneReport> {
    tune_with(
        tags,
        image_features,
        tag_features,
        truth,
        grid,
        base,
        rectification,
        policy,
        |configs, score| configs.iter().map(score).collect(),
    )
}

/// One scored grid point.
pub type Scored = Result<TunePoint>;

/// [`tune`] with a caller-supplied map over the grid's refine configs.
///
/// `map` must return one result per config, in order; it may evaluate the
/// closure it is given concurrently.
#[allow(clippy::too_many_arguments)]
pub fn tune_with<M>(
    tags: &TagMatrix,
    image_features: &FeatureMatrix,
    tag_features: &FeatureMatrix,
    truth: &TagMatrix,
    grid: &TuneGrid,
    base: &RefineConfig,
    rectification: Rectification,
    policy: EmptyTruthPolicy,
    map: M,
) -> Result<TuneReport>
where
    M: FnOnce(&[RefineConfig], &(dyn Fn(&RefineConfig) -> Scored + Sync)) -> Vec<Scored>,
{
    grid.validate()?;
    let (l_v, l_s) = laplacians(image_features, tag_features, rectification)?;
    let validation_images = validation_split(truth, grid.validation_fraction, grid.split_seed);
    let configs = grid.configs(base);
    for c in &configs {
        c.validate(image_features.dim(), tag_features.dim())?;
    }
    let score = |config: &RefineConfig| -> Scored {
        let refined = refine(tags, image_features, tag_features, &l_v, &l_s, config)?;
        let report = ap_ar_at_n_for(&refined.scores, truth, grid.n, policy, Some(&validation_images))?;
        Ok(TunePoint {
            rank: config.rank,
            lambda1: config.lambda1,
            lambda2: config.lambda2,
            mu: config.mu,
            ap: report.ap,
            ar: report.ar,
        })
    };
    let points = map(&configs, &score).into_iter().collect::<Result<Vec<_>>>()?;
    if points.len() != configs.len() {
        return Err(crate::Error::DimensionMismatch {
            context: "tuning results",
            expected: configs.len(),
            found: points.len(),
        });
    }
    let mut best = 0;
    for (i, p) in points.iter().enumerate() {
        if p.ap > points[best].ap {
            best = i;
        }
    }
    Ok(TuneReport {
        points,
        best,
        validation_images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{inject_noise, NoiseSpec};
    use crate::testkit::{gen_tagged_bundle, TaggedBundleSpec};

    fn small() -> (crate::testkit::TaggedBundle, TagMatrix) {
        let spec = TaggedBundleSpec {
            clusters: 3,
            images_per_cluster: 20,
            n_tags: 15,
            f_i: 12,
            f_t: 8,
            rank: 3,
            tags_per_image: 3,
            ..TaggedBundleSpec::default()
        };
        let b = gen_tagged_bundle(&spec).unwrap();
        let noisy = inject_noise(&b.truth, &NoiseSpec { missing_rate: 0.3, inaccurate_rate: 0.3, seed: 1 }).unwrap();
        (b, noisy)
    }

    #[test]
    fn pipeline_runs_and_reports() {
        let (b, noisy) = small();
        let config = PipelineConfig {
            k: 3,
            refine: RefineConfig { rank: 3, ..RefineConfig::default() },
            ..PipelineConfig::default()
        };
        let out = run_pipeline(&noisy, &b.v, &b.t, Some(&b.truth), &config).unwrap();
        assert_eq!(out.reports.len(), 3);
        assert!(out.completed.nnz() >= noisy.nnz());
        assert_eq!(out.refined.scores.shape(), (60, 15));
        assert_eq!(out.clusters.assignment.labels.len(), 60);
    }

    #[test]
    fn tune_picks_the_best_point() {
        let (b, noisy) = small();
        let grid = TuneGrid {
            rank: vec![3],
            lambda1: vec![0.1],
            lambda2: vec![0.0],
            mu: vec![0.0, 0.5],
            ..TuneGrid::default()
        };
        let base = RefineConfig { outer_iters: 5, ..RefineConfig::default() };
        let report = tune(&noisy, &b.v, &b.t, &b.truth, &grid, &base, Rectification::Clamp, EmptyTruthPolicy::Exclude)
            .unwrap();
        assert_eq!(report.points.len(), 2);
        let max = report.points.iter().map(|p| p.ap).fold(f64::MIN, f64::max);
        assert_eq!(report.best_point().ap, max);
        assert_eq!(report.validation_images.len(), 18);
    }

    #[test]
    fn invalid_configs() {
        let bad = PipelineConfig { k: 0, ..PipelineConfig::default() };
        assert!(bad.validate().is_err());
        let bad = PipelineConfig {
            refine: RefineConfig { mu: 1.2, ..RefineConfig::default() },
            ..PipelineConfig::default()
        };
        assert!(matches!(bad.validate(), Err(crate::Error::InvalidConfig { field: "refine.mu", .. })));
        let grid = TuneGrid { mu: vec![], ..TuneGrid::default() };
        assert!(grid.validate().is_err());
    }
}
