//! Precision and recall at N, and synthetic annotation noise.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;

use crate::error::{invalid, Error, Result};
use crate::seeded_rng;
use crate::tagmat::{rank_desc, Scores, TagMatrix};

/// What to do with images that have no ground-truth tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum EmptyTruthPolicy {
    /// Leave them out of both averages.
    #[default]
    Exclude,
    /// Count them with precision and recall zero.
    Zero,
}

/// AP@N and AR@N over a set of images.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n: usize,
    pub ap: f64,
    pub ar: f64,
    /// Images that entered the averages, ascending.
    pub images: Vec<usize>,
    pub per_image_precision: Vec<f64>,
    pub per_image_recall: Vec<f64>,
}

/// Average precision and recall of every image's top-`n` tags.
///
/// `precision = hits / n` and `recall = hits / |true tags|`. Ties in the scores
/// are broken by ascending tag index. Entries of `truth` must be exactly one.
pub fn ap_ar_at_n<S: Scores + ?Sized>(
    predicted: &S,
    truth: &TagMatrix,
    n: usize,
    policy: EmptyTruthPolicy,
) -> Result<EvalReport> {
    ap_ar_at_n_for(predicted, truth, n, policy, None)
}

/// [`ap_ar_at_n`] restricted to a subset of image rows.
pub fn ap_ar_at_n_for<S: Scores + ?Sized>(
    predicted: &S,
    truth: &TagMatrix,
    n: usize,
    policy: EmptyTruthPolicy,
    rows: Option<&[usize]>,
) -> Result<EvalReport> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if predicted.n_rows() != truth.n_images() {
        return Err(Error::DimensionMismatch {
            context: "prediction rows",
            expected: truth.n_images(),
            found: predicted.n_rows(),
        });
    }
    if predicted.n_cols() != truth.n_tags() {
        return Err(Error::DimensionMismatch {
            context: "prediction columns",
            expected: truth.n_tags(),
            found: predicted.n_cols(),
        });
    }
    truth.require_binary()?;
    let all: Vec<usize>;
    let rows = match rows {
        Some(r) => r,
        None => {
            all = (0..truth.n_images()).collect();
            &all
        }
    };
    let mut buf = vec![0.0; truth.n_tags()];
    let mut images = Vec::new();
    let mut precision = Vec::new();
    let mut recall = Vec::new();
    for &i in rows {
        let (true_tags, _) = truth.row(i);
        if true_tags.is_empty() {
            if policy == EmptyTruthPolicy::Zero {
                images.push(i);
                precision.push(0.0);
                recall.push(0.0);
            }
            continue;
        }
        predicted.fill_row(i, &mut buf);
        let hits = rank_desc(&buf)
            .into_iter()
            .take(n)
            .filter(|j| true_tags.binary_search(j).is_ok())
            .count() as f64;
        images.push(i);
        precision.push(hits / n as f64);
        recall.push(hits / true_tags.len() as f64);
    }
    if images.is_empty() || truth.nnz() == 0 {
        return Err(Error::EmptyTruth);
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    Ok(EvalReport {
        n,
        ap: mean(&precision),
        ar: mean(&recall),
        images,
        per_image_precision: precision,
        per_image_recall: recall,
    })
}

/// Synthetic annotation noise.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseSpec {
    /// Fraction of true entries deleted.
    pub missing_rate: f64,
    /// Spurious entries added, as a fraction of the number of true entries.
    pub inaccurate_rate: f64,
    pub seed: u64,
}

/// Deletes `floor(missing_rate * nnz)` true entries and adds
/// `floor(inaccurate_rate * nnz)` spurious ones at originally-empty positions,
/// both uniformly at random. Deterministic per seed.
pub fn inject_noise(truth: &TagMatrix, spec: &NoiseSpec) -> Result<TagMatrix> {
    for (field, rate) in [
        ("missing_rate", spec.missing_rate),
        ("inaccurate_rate", spec.inaccurate_rate),
    ] {
        if !(0.0..=1.0).contains(&rate) {
            return Err(invalid(field, "must lie in [0, 1]"));
        }
    }
    truth.require_binary()?;
    let nnz = truth.nnz();
    let n_missing = libm::floor(spec.missing_rate * nnz as f64) as usize;
    let n_spurious = libm::floor(spec.inaccurate_rate * nnz as f64) as usize;
    let total = truth.n_images() * truth.n_tags();
    let zeros = total - nnz;
    if n_spurious > zeros {
        return Err(Error::NoiseBudget {
            requested: n_spurious,
            available: zeros,
        });
    }
    let mut rng = seeded_rng(spec.seed);
    let entries: Vec<(usize, usize)> = truth.iter().map(|(i, j, _)| (i, j)).collect();
    let mut keep = vec![true; nnz];
    for k in sample(&mut rng, nnz, n_missing) {
        keep[k] = false;
    }
    let empty: Vec<(usize, usize)> = (0..truth.n_images())
        .flat_map(|i| (0..truth.n_tags()).map(move |j| (i, j)))
        .filter(|&(i, j)| !truth.contains(i, j))
        .collect();
    let mut triplets: Vec<(usize, usize, f64)> = entries
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(&(i, j), _)| (i, j, 1.0))
        .collect();
    triplets.extend(sample(&mut rng, zeros, n_spurious).into_iter().map(|k| {
        let (i, j) = empty[k];
        (i, j, 1.0)
    }));
    TagMatrix::from_triplets(truth.n_images(), truth.n_tags(), triplets)
}
