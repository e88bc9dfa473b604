//! Tag matrices, feature matrices, similarity graphs and graph Laplacians.
//!
//! Rows of every matrix are items (images or tags). Tag matrices are stored in
//! compressed-row form; absent entries mean a confidence of zero.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Sparse image-by-tag confidence matrix in compressed-row form.
///
/// Every stored value is finite and lies in `(0, 1]`; zeros are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct TagMatrix {
    n_images: usize,
    n_tags: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl TagMatrix {
    /// An empty (all-zero) matrix.
    pub fn zeros(n_images: usize, n_tags: usize) -> Result<Self> {
        check_shape(n_images, n_tags)?;
        Ok(Self {
            n_images,
            n_tags,
            row_ptr: vec![0; n_images + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        })
    }

    /// Builds a matrix from `(image, tag, confidence)` triplets in any order.
    ///
    /// Explicit zeros are dropped. Duplicates, out-of-bounds indices and values
    /// outside `[0, 1]` are rejected.
    pub fn from_triplets(
        n_images: usize,
        n_tags: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        check_shape(n_images, n_tags)?;
        let mut items: Vec<(usize, usize, f64)> = Vec::new();
        for (row, col, value) in triplets {
            if row >= n_images || col >= n_tags {
                return Err(Error::IndexOutOfBounds {
                    row,
                    col,
                    n_rows: n_images,
                    n_cols: n_tags,
                });
            }
            check_confidence(row, col, value)?;
            if value != 0.0 {
                items.push((row, col, value));
            }
        }
        items.sort_unstable_by_key(|&(i, j, _)| (i, j));
        if let Some(w) = items.windows(2).find(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1) {
            return Err(Error::DuplicateEntry {
                row: w[0].0,
                col: w[0].1,
            });
        }
        let mut row_ptr = vec![0; n_images + 1];
        for &(row, _, _) in &items {
            row_ptr[row + 1] += 1;
        }
        for i in 0..n_images {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            n_images,
            n_tags,
            row_ptr,
            col_idx: items.iter().map(|t| t.1).collect(),
            values: items.iter().map(|t| t.2).collect(),
        })
    }

    /// Builds a matrix from a dense array whose entries must lie in `[0, 1]`.
    pub fn from_dense(dense: &DMatrix<f64>) -> Result<Self> {
        let (n_images, n_tags) = dense.shape();
        let triplets = (0..n_images)
            .flat_map(|i| (0..n_tags).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, dense[(i, j)]));
        Self::from_triplets(n_images, n_tags, triplets)
    }

    /// Converts raw scores into a tag matrix, clamping every value to `[0, 1]`.
    ///
    /// Non-finite scores are an error.
    pub fn from_scores_clamped(scores: &DMatrix<f64>) -> Result<Self> {
        let (n_images, n_tags) = scores.shape();
        let mut triplets = Vec::new();
        for i in 0..n_images {
            for j in 0..n_tags {
                let s = scores[(i, j)];
                if !s.is_finite() {
                    return Err(Error::NonFinite {
                        context: "scores",
                        row: i,
                        col: j,
                    });
                }
                let c = s.clamp(0.0, 1.0);
                if c > 0.0 {
                    triplets.push((i, j, c));
                }
            }
        }
        Self::from_triplets(n_images, n_tags, triplets)
    }

    pub fn n_images(&self) -> usize {
        self.n_images
    }

    pub fn n_tags(&self) -> usize {
        self.n_tags
    }

    /// Number of stored (nonzero) entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of one image row, columns ascending.
    pub fn row(&self, image: usize) -> (&[usize], &[f64]) {
        let range = self.row_ptr[image]..self.row_ptr[image + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    pub fn get(&self, image: usize, tag: usize) -> f64 {
        let (cols, vals) = self.row(image);
        cols.binary_search(&tag).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn contains(&self, image: usize, tag: usize) -> bool {
        self.row(image).0.binary_search(&tag).is_ok()
    }

    /// All stored entries as `(image, tag, confidence)`, row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_images).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut dense = DMatrix::zeros(self.n_images, self.n_tags);
        for (i, j, v) in self.iter() {
            dense[(i, j)] = v;
        }
        dense
    }

    /// Whether every stored value is exactly one.
    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 1.0)
    }

    pub(crate) fn require_binary(&self) -> Result<()> {
        match self.iter().find(|&(_, _, v)| v != 1.0) {
            Some((row, col, _)) => Err(Error::NotBinary { row, col }),
            None => Ok(()),
        }
    }

    /// Keeps only the listed image rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> TagMatrix {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &r in rows {
            let (cols, vals) = self.row(r);
            col_idx.extend_from_slice(cols);
            values.extend_from_slice(vals);
            row_ptr.push(col_idx.len());
        }
        TagMatrix {
            n_images: rows.len().max(1),
            n_tags: self.n_tags,
            row_ptr: if rows.is_empty() { vec![0, 0] } else { row_ptr },
            col_idx,
            values,
        }
    }
}

fn check_shape(n_images: usize, n_tags: usize) -> Result<()> {
    if n_images == 0 {
        return Err(Error::DimensionMismatch {
            context: "tag matrix rows",
            expected: 1,
            found: 0,
        });
    }
    if n_tags == 0 {
        return Err(Error::DimensionMismatch {
            context: "tag matrix columns",
            expected: 1,
            found: 0,
        });
    }
    Ok(())
}

fn check_confidence(row: usize, col: usize, value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::NonFinite {
            context: "tag matrix",
            row,
            col,
        });
    }
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::OutOfRange { row, col, value });
    }
    Ok(())
}

/// Anything that assigns a score to every (image, tag) pair.
///
/// Implemented by [`TagMatrix`] (absent entries score zero) and by raw dense
/// score matrices, so ranking and evaluation accept either.
pub trait Scores {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    /// Writes the scores of one row into `out` (length `n_cols`).
    fn fill_row(&self, row: usize, out: &mut [f64]);
}

impl Scores for TagMatrix {
    fn n_rows(&self) -> usize {
        self.n_images
    }
    fn n_cols(&self) -> usize {
        self.n_tags
    }
    fn fill_row(&self, row: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let (cols, vals) = self.row(row);
        for (&j, &v) in cols.iter().zip(vals) {
            out[j] = v;
        }
    }
}

impl Scores for DMatrix<f64> {
    fn n_rows(&self) -> usize {
        self.nrows()
    }
    fn n_cols(&self) -> usize {
        self.ncols()
    }
    fn fill_row(&self, row: usize, out: &mut [f64]) {
        for (j, x) in out.iter_mut().enumerate() {
            *x = self[(row, j)];
        }
    }
}

/// Orders tag indices by descending score, ties by ascending index.
pub(crate) fn rank_desc(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

/// The `n` highest-scoring tag indices of every image.
///
/// Ties are broken by ascending tag index. If `n` exceeds the number of tags,
/// every tag is returned in rank order.
pub fn top_n_tags<S: Scores + ?Sized>(scores: &S, n: usize) -> Vec<Vec<usize>> {
    let mut buf = vec![0.0; scores.n_cols()];
    (0..scores.n_rows())
        .map(|i| {
            scores.fill_row(i, &mut buf);
            let mut ranked = rank_desc(&buf);
            ranked.truncate(n);
            ranked
        })
        .collect()
}

/// Dense matrix whose rows are feature vectors (images or tags).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: DMatrix<f64>,
}

impl FeatureMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::DimensionMismatch {
                context: "feature matrix",
                expected: 1,
                found: 0,
            });
        }
        for j in 0..data.ncols() {
            for i in 0..data.nrows() {
                if !data[(i, j)].is_finite() {
                    return Err(Error::NonFinite {
                        context: "feature matrix",
                        row: i,
                        col: j,
                    });
                }
            }
        }
        Ok(Self { data })
    }

    /// Builds a matrix from row-major values.
    pub fn from_row_slice(n_rows: usize, dim: usize, values: &[f64]) -> Result<Self> {
        if values.len() != n_rows * dim {
            return Err(Error::DimensionMismatch {
                context: "feature values",
                expected: n_rows * dim,
                found: values.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(n_rows, dim, values))
    }

    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Copy with every row scaled to unit Euclidean norm. Zero rows stay zero.
    pub fn unit_rows(&self) -> FeatureMatrix {
        let mut data = self.data.clone();
        for mut row in data.row_iter_mut() {
            let norm = row.norm();
            if norm > 0.0 {
                row /= norm;
            }
        }
        FeatureMatrix { data }
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            data: self.data.select_rows(rows),
        }
    }
}

/// How negative cosine similarities are mapped onto nonnegative weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Rectification {
    /// `max(cos, 0)`.
    #[default]
    Clamp,
    /// `(1 + cos) / 2`.
    Shift,
}

/// Symmetric, nonnegative weight matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    weights: DMatrix<f64>,
}

/// Symmetry tolerance for similarity graphs.
pub const SYMMETRY_TOL: f64 = 1e-12;

impl SimilarityGraph {
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        let n = weights.nrows();
        if weights.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "similarity graph",
                expected: n,
                found: weights.ncols(),
            });
        }
        for i in 0..n {
            for j in 0..n {
                let w = weights[(i, j)];
                if !w.is_finite() {
                    return Err(Error::InvalidGraph {
                        row: i,
                        col: j,
                        reason: "non-finite weight",
                    });
                }
                if w < 0.0 {
                    return Err(Error::InvalidGraph {
                        row: i,
                        col: j,
                        reason: "negative weight",
                    });
                }
                if i == j && w != 0.0 {
                    return Err(Error::InvalidGraph {
                        row: i,
                        col: j,
                        reason: "nonzero diagonal",
                    });
                }
                if j > i && (w - weights[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::AsymmetricGraph { row: i, col: j });
                }
            }
        }
        Ok(Self { weights })
    }

    pub fn size(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    /// Induced subgraph on the listed nodes, in the given order.
    pub fn restrict(&self, nodes: &[usize]) -> SimilarityGraph {
        let m = nodes.len();
        SimilarityGraph {
            weights: DMatrix::from_fn(m, m, |a, b| self.weights[(nodes[a], nodes[b])]),
        }
    }

    /// The graph with every weight multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> SimilarityGraph {
        SimilarityGraph {
            weights: &self.weights * factor,
        }
    }
}

/// Rectified cosine similarity between all pairs of feature rows.
///
/// Every row must have nonzero norm. The diagonal is zero.
pub fn cosine_similarity_graph(
    features: &FeatureMatrix,
    rectification: Rectification,
) -> Result<SimilarityGraph> {
    let data = features.matrix();
    let n = data.nrows();
    let mut norms = Vec::with_capacity(n);
    for (i, row) in data.row_iter().enumerate() {
        let norm = row.norm();
        if norm == 0.0 {
            return Err(Error::ZeroNormRow { row: i });
        }
        norms.push(norm);
    }
    let gram = data * data.transpose();
    let mut weights = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let cos = (gram[(i, j)] / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            let w = match rectification {
                Rectification::Clamp => cos.max(0.0),
                Rectification::Shift => 0.5 * (1.0 + cos),
            };
            weights[(i, j)] = w;
            weights[(j, i)] = w;
        }
    }
    Ok(SimilarityGraph { weights })
}

/// Combinatorial graph Laplacian `diag(G 1) - G`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphLaplacian {
    matrix: DMatrix<f64>,
}

impl GraphLaplacian {
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Laplacian of the edgeless graph on `n` nodes.
    pub fn zeros(n: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(n, n),
        }
    }

    /// Quadratic form `x^T L x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let n = self.size();
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.matrix[(i, j)] * x[j];
            }
            acc += x[i] * row;
        }
        acc
    }
}

pub fn graph_laplacian(graph: &SimilarityGraph) -> Result<GraphLaplacian> {
    let w = graph.weights();
    let n = w.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (w[(i, j)] - w[(j, i)]).abs() > SYMMETRY_TOL {
                return Err(Error::AsymmetricGraph { row: i, col: j });
            }
        }
    }
    let mut matrix = -w.clone();
    for i in 0..n {
        // Off-diagonal sum of the Laplacian row, so L 1 = 0 holds to rounding.
        let degree: f64 = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        matrix[(i, i)] = degree;
    }
    Ok(GraphLaplacian { matrix })
}

/// Tag matrix plus the image and tag side information it is refined with.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub tags: TagMatrix,
    pub image_features: FeatureMatrix,
    pub tag_features: FeatureMatrix,
    pub image_ids: Vec<alloc::string::String>,
    pub tag_names: Vec<alloc::string::String>,
    pub ground_truth: Option<TagMatrix>,
}

impl DatasetBundle {
    /// Checks that every component agrees on the number of images and tags.
    pub fn validate(&self) -> Result<()> {
        let n_i = self.tags.n_images();
        let n_t = self.tags.n_tags();
        let checks = [
            ("image feature rows", n_i, self.image_features.n_rows()),
            ("image ids", n_i, self.image_ids.len()),
            ("tag feature rows", n_t, self.tag_features.n_rows()),
            ("tag names", n_t, self.tag_names.len()),
        ];
        for (context, expected, found) in checks {
            if expected != found {
                return Err(Error::DimensionMismatch {
                    context,
                    expected,
                    found,
                });
            }
        }
        if let Some(truth) = &self.ground_truth {
            if truth.n_images() != n_i {
                return Err(Error::DimensionMismatch {
                    context: "ground truth rows",
                    expected: n_i,
                    found: truth.n_images(),
                });
            }
            if truth.n_tags() != n_t {
                return Err(Error::DimensionMismatch {
                    context: "ground truth columns",
                    expected: n_t,
                    found: truth.n_tags(),
                });
            }
        }
        Ok(())
    }
}
