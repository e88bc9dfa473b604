//! Synthetic generators and reference oracles.
//!
//! Generators are seed-deterministic. The [`oracle`] functions use plain dense
//! arithmetic that shares no code with the solvers they check.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::seeded_rng;
use crate::subspace::ClusterAssignment;
use crate::tagmat::{rank_desc, FeatureMatrix, TagMatrix};

pub(crate) fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    // Filled row by row so the draw order matches the row-major reading order.
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

fn orthonormal_basis<R: Rng>(rng: &mut R, ambient: usize, dim: usize) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, ambient, dim);
    g.qr().q().columns(0, dim).into_owned()
}

fn normalize_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
}

/// Points sampled from a union of linear subspaces.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceInstance {
    pub points: FeatureMatrix,
    pub labels: Vec<usize>,
    /// Orthonormal basis (ambient x dim) of every subspace.
    pub bases: Vec<DMatrix<f64>>,
    pub noise_sigma: f64,
}

/// `k` random subspaces of dimension `dim_subspace` in `R^dim_ambient`, with
/// `n_per_subspace` unit-norm points each, Gaussian coefficients and additive
/// Gaussian noise of standard deviation `noise_sigma`. Points are grouped by
/// subspace.
pub fn gen_union_of_subspaces(
    k: usize,
    dim_subspace: usize,
    dim_ambient: usize,
    n_per_subspace: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<SubspaceInstance> {
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    if dim_subspace == 0 || dim_subspace >= dim_ambient {
        return Err(invalid("dim_subspace", "must satisfy 0 < dim_subspace < dim_ambient"));
    }
    if n_per_subspace == 0 {
        return Err(invalid("n_per_subspace", "must be at least 1"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(invalid("noise_sigma", "must be nonnegative"));
    }
    let mut rng = seeded_rng(seed);
    let bases: Vec<DMatrix<f64>> = (0..k).map(|_| orthonormal_basis(&mut rng, dim_ambient, dim_subspace)).collect();
    let n = k * n_per_subspace;
    let mut points = DMatrix::zeros(n, dim_ambient);
    let mut labels = Vec::with_capacity(n);
    for (c, basis) in bases.iter().enumerate() {
        for s in 0..n_per_subspace {
            let coeffs = gaussian_matrix(&mut rng, dim_subspace, 1);
            let mut x = basis * coeffs;
            if noise_sigma > 0.0 {
                x += gaussian_matrix(&mut rng, dim_ambient, 1) * noise_sigma;
            }
            points.row_mut(c * n_per_subspace + s).copy_from(&x.transpose());
            labels.push(c);
        }
    }
    normalize_rows(&mut points);
    Ok(SubspaceInstance {
        points: FeatureMatrix::new(points)?,
        labels,
        bases,
        noise_sigma,
    })
}

/// Subspace-preserving rate and the rows it had to skip.
#[derive(Debug, Clone, PartialEq)]
pub struct PreservingRate {
    pub rate: f64,
    /// Rows whose coefficients are all zero.
    pub excluded_rows: Vec<usize>,
}

/// Average over points of the fraction of `|z|` mass placed on points with the
/// same ground-truth label. All-zero rows are excluded.
pub fn subspace_preserving_rate(z: &DMatrix<f64>, labels: &[usize]) -> Result<PreservingRate> {
    let n = z.nrows();
    if z.ncols() != n || labels.len() != n {
        return Err(Error::DimensionMismatch {
            context: "subspace preserving rate",
            expected: n,
            found: labels.len(),
        });
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    let mut excluded_rows = Vec::new();
    for i in 0..n {
        let mut inside = 0.0;
        let mut all = 0.0;
        for j in 0..n {
            let a = z[(i, j)].abs();
            all += a;
            if labels[j] == labels[i] {
                inside += a;
            }
        }
        if all == 0.0 {
            excluded_rows.push(i);
        } else {
            total += inside / all;
            counted += 1;
        }
    }
    if counted == 0 {
        return Err(Error::DegenerateRepresentation);
    }
    Ok(PreservingRate {
        rate: total / counted as f64,
        excluded_rows,
    })
}

/// Best agreement fraction between two labelings over all label matchings.
///
/// Exhaustive over permutations for up to 8 labels, Hungarian assignment above.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            context: "clustering accuracy",
            expected: truth.len(),
            found: pred.len(),
        });
    }
    if pred.is_empty() {
        return Ok(1.0);
    }
    let size = pred.iter().chain(truth).copied().max().unwrap_or(0) + 1;
    let mut confusion = vec![vec![0usize; size]; size];
    for (&p, &t) in pred.iter().zip(truth) {
        confusion[p][t] += 1;
    }
    let matched = if size <= 8 {
        best_permutation(&confusion)
    } else {
        hungarian_max(&confusion)
    };
    Ok(matched as f64 / pred.len() as f64)
}

/// Convenience wrapper over [`clustering_accuracy`].
pub fn assignment_accuracy(pred: &ClusterAssignment, truth: &[usize]) -> Result<f64> {
    clustering_accuracy(&pred.labels, truth)
}

fn best_permutation(confusion: &[Vec<usize>]) -> usize {
    fn recurse(confusion: &[Vec<usize>], row: usize, used: &mut [bool], acc: usize, best: &mut usize) {
        if row == confusion.len() {
            *best = (*best).max(acc);
            return;
        }
        for col in 0..confusion.len() {
            if !used[col] {
                used[col] = true;
                recurse(confusion, row + 1, used, acc + confusion[row][col], best);
                used[col] = false;
            }
        }
    }
    let mut best = 0;
    let mut used = vec![false; confusion.len()];
    recurse(confusion, 0, &mut used, 0, &mut best);
    best
}

/// Maximum-weight perfect matching on a square count matrix.
fn hungarian_max(confusion: &[Vec<usize>]) -> usize {
    let n = confusion.len();
    let max = confusion.iter().flatten().copied().max().unwrap_or(0) as i64;
    let cost = |i: usize, j: usize| max - confusion[i][j] as i64;
    // Potentials-based O(n^3) assignment, 1-indexed with a sentinel column 0.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| confusion[p[j] - 1][j - 1]).sum()
}

/// Parameters of [`gen_planted_annotation`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub n_images: usize,
    pub n_tags: usize,
    pub f_i: usize,
    pub f_t: usize,
    pub rank: usize,
    /// Fraction of tags kept per image in `o_star`, in `(0, 1]`.
    pub density: f64,
    /// Draw every factor entry as `|N(0, 1)|` instead of `N(0, 1)`.
    pub positive: bool,
    pub seed: u64,
}

/// Tag scores generated by a planted low-rank model.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedAnnotation {
    pub v: FeatureMatrix,
    pub t: FeatureMatrix,
    pub p_star: DMatrix<f64>,
    pub q_star: DMatrix<f64>,
    /// `V P* Q*^T T^T` with `p_star` scaled so the largest magnitude is exactly 1.
    pub scores: DMatrix<f64>,
    /// Binary incidence of the top `ceil(density * n_tags)` scores of every image.
    pub o_star: TagMatrix,
}

impl PlantedAnnotation {
    /// Number of tags kept per image for a given density.
    pub fn tags_per_image(n_tags: usize, density: f64) -> usize {
        (libm::ceil(density * n_tags as f64) as usize).clamp(1, n_tags)
    }
}

pub fn gen_planted_annotation(spec: &PlantedSpec) -> Result<PlantedAnnotation> {
    if spec.n_images == 0 || spec.n_tags == 0 || spec.f_i == 0 || spec.f_t == 0 {
        return Err(invalid("dimensions", "all sizes must be at least 1"));
    }
    if spec.rank == 0 || spec.rank > spec.f_i.min(spec.f_t) {
        return Err(invalid("rank", "must satisfy 1 <= rank <= min(f_i, f_t)"));
    }
    if !(spec.density > 0.0 && spec.density <= 1.0) {
        return Err(invalid("density", "must lie in (0, 1]"));
    }
    let mut rng = seeded_rng(spec.seed);
    let mut draw = |rows, cols| {
        let m = gaussian_matrix(&mut rng, rows, cols);
        if spec.positive {
            m.abs()
        } else {
            m
        }
    };
    let v = draw(spec.n_images, spec.f_i);
    let t = draw(spec.n_tags, spec.f_t);
    let mut p_star = draw(spec.f_i, spec.rank);
    let q_star = draw(spec.f_t, spec.rank);
    let raw = &v * &p_star * q_star.transpose() * t.transpose();
    let scale = raw.amax();
    let scores = if scale > 0.0 {
        p_star /= scale;
        raw / scale
    } else {
        raw
    };
    let keep = PlantedAnnotation::tags_per_image(spec.n_tags, spec.density);
    let mut triplets = Vec::with_capacity(keep * spec.n_images);
    for i in 0..spec.n_images {
        let row: Vec<f64> = scores.row(i).iter().copied().collect();
        triplets.extend(rank_desc(&row).into_iter().take(keep).map(|j| (i, j, 1.0)));
    }
    Ok(PlantedAnnotation {
        v: FeatureMatrix::new(v)?,
        t: FeatureMatrix::new(t)?,
        p_star,
        q_star,
        scores,
        o_star: TagMatrix::from_triplets(spec.n_images, spec.n_tags, triplets)?,
    })
}

/// Parameters of [`gen_tagged_bundle`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TaggedBundleSpec {
    /// Number of image clusters (subspaces).
    pub clusters: usize,
    pub dim_subspace: usize,
    /// Image feature dimension.
    pub f_i: usize,
    pub images_per_cluster: usize,
    pub n_tags: usize,
    /// Tag feature dimension.
    pub f_t: usize,
    /// Rank of the planted image-to-tag map.
    pub rank: usize,
    pub tags_per_image: usize,
    /// Spread of in-subspace coefficients around the cluster center.
    pub spread: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for TaggedBundleSpec {
    fn default() -> Self {
        Self {
            clusters: 5,
            dim_subspace: 4,
            f_i: 30,
            images_per_cluster: 100,
            n_tags: 50,
            f_t: 20,
            rank: 5,
            tags_per_image: 5,
            spread: 0.5,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

/// Images drawn from a union of subspaces with clean tags from a planted
/// low-rank map.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedBundle {
    pub v: FeatureMatrix,
    pub t: FeatureMatrix,
    pub labels: Vec<usize>,
    pub scores: DMatrix<f64>,
    /// Binary top-`tags_per_image` incidence of `scores`.
    pub truth: TagMatrix,
}

/// Image rows lie in per-cluster subspaces around a random center (so images
/// of one cluster share most of their tags); tag rows are Gaussian; the clean
/// tags of an image are its top scores under `V P* Q*^T T^T`.
pub fn gen_tagged_bundle(spec: &TaggedBundleSpec) -> Result<TaggedBundle> {
    if spec.clusters == 0 || spec.images_per_cluster == 0 {
        return Err(invalid("clusters", "need at least one cluster with one image"));
    }
    if spec.dim_subspace == 0 || spec.dim_subspace >= spec.f_i {
        return Err(invalid("dim_subspace", "must satisfy 0 < dim_subspace < f_i"));
    }
    if spec.n_tags == 0 || spec.f_t == 0 {
        return Err(invalid("n_tags", "tags and tag features must be nonempty"));
    }
    if spec.rank == 0 || spec.rank > spec.f_i.min(spec.f_t) {
        return Err(invalid("rank", "must satisfy 1 <= rank <= min(f_i, f_t)"));
    }
    if spec.tags_per_image == 0 || spec.tags_per_image > spec.n_tags {
        return Err(invalid("tags_per_image", "must lie in 1..=n_tags"));
    }
    if !(spec.spread >= 0.0 && spec.noise_sigma >= 0.0) {
        return Err(invalid("spread", "spread and noise_sigma must be nonnegative"));
    }
    let mut rng = seeded_rng(spec.seed);
    let n = spec.clusters * spec.images_per_cluster;
    let mut v = DMatrix::zeros(n, spec.f_i);
    let mut labels = Vec::with_capacity(n);
    for c in 0..spec.clusters {
        let basis = orthonormal_basis(&mut rng, spec.f_i, spec.dim_subspace);
        let center = gaussian_matrix(&mut rng, spec.dim_subspace, 1);
        for s in 0..spec.images_per_cluster {
            let coeffs = &center + gaussian_matrix(&mut rng, spec.dim_subspace, 1) * spec.spread;
            let mut x = &basis * coeffs;
            if spec.noise_sigma > 0.0 {
                x += gaussian_matrix(&mut rng, spec.f_i, 1) * spec.noise_sigma;
            }
            v.row_mut(c * spec.images_per_cluster + s).copy_from(&x.transpose());
            labels.push(c);
        }
    }
    normalize_rows(&mut v);
    let mut t = gaussian_matrix(&mut rng, spec.n_tags, spec.f_t);
    normalize_rows(&mut t);
    let p = gaussian_matrix(&mut rng, spec.f_i, spec.rank);
    let q = gaussian_matrix(&mut rng, spec.f_t, spec.rank);
    let scores = &v * p * q.transpose() * t.transpose();
    let mut triplets = Vec::with_capacity(n * spec.tags_per_image);
    for i in 0..n {
        let row: Vec<f64> = scores.row(i).iter().copied().collect();
        triplets.extend(
            rank_desc(&row)
                .into_iter()
                .take(spec.tags_per_image)
                .map(|j| (i, j, 1.0)),
        );
    }
    Ok(TaggedBundle {
        v: FeatureMatrix::new(v)?,
        t: FeatureMatrix::new(t)?,
        labels,
        scores,
        truth: TagMatrix::from_triplets(n, spec.n_tags, triplets)?,
    })
}

/// Reference implementations used to check the optimized code paths.
pub mod oracle {
    use alloc::vec;
    use alloc::vec::Vec;

    use nalgebra::DMatrix;

    /// Inputs of the refinement objective in plain dense form.
    pub struct DenseProblem<'a> {
        pub o: &'a DMatrix<f64>,
        pub v: &'a DMatrix<f64>,
        pub t: &'a DMatrix<f64>,
        pub l_v: &'a DMatrix<f64>,
        pub l_s: &'a DMatrix<f64>,
        pub lambda1: f64,
        pub lambda2: f64,
        pub mu: f64,
    }

    /// `||O - Ô||^2 - mu ||U_Omega(O - Ô)||^2`, with Omega the zero entries of `o`.
    pub fn complex_error_loss(o: &DMatrix<f64>, o_hat: &DMatrix<f64>, mu: f64) -> f64 {
        let full = (o - o_hat).norm_squared();
        let mut unannotated = 0.0;
        for i in 0..o.nrows() {
            for j in 0..o.ncols() {
                if o[(i, j)] == 0.0 {
                    let d = o[(i, j)] - o_hat[(i, j)];
                    unannotated += d * d;
                }
            }
        }
        full - mu * unannotated
    }

    /// Full refinement objective evaluated entry by entry.
    pub fn objective(problem: &DenseProblem<'_>, p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
        let o_hat = problem.v * p * q.transpose() * problem.t.transpose();
        let (n_i, n_t) = o_hat.shape();
        let mut loss = 0.0;
        for i in 0..n_i {
            for j in 0..n_t {
                let w = if problem.o[(i, j)] == 0.0 { 1.0 - problem.mu } else { 1.0 };
                let d = problem.o[(i, j)] - o_hat[(i, j)];
                loss += w * d * d;
            }
        }
        // sum_ij L_ij <row_i, row_j> over images, then over tags (columns).
        let mut visual = 0.0;
        for a in 0..n_i {
            for b in 0..n_i {
                let dot: f64 = (0..n_t).map(|j| o_hat[(a, j)] * o_hat[(b, j)]).sum();
                visual += problem.l_v[(a, b)] * dot;
            }
        }
        let mut semantic = 0.0;
        for a in 0..n_t {
            for b in 0..n_t {
                let dot: f64 = (0..n_i).map(|i| o_hat[(i, a)] * o_hat[(i, b)]).sum();
                semantic += problem.l_s[(a, b)] * dot;
            }
        }
        loss + 0.5 * problem.lambda1 * (p.norm_squared() + q.norm_squared())
            + problem.lambda2 * (visual + semantic)
    }

    /// Central finite differences of `f` at `x` with step `h`.
    pub fn finite_difference_gradient<F>(f: F, x: &DMatrix<f64>, h: f64) -> DMatrix<f64>
    where
        F: Fn(&DMatrix<f64>) -> f64,
    {
        let mut grad = DMatrix::zeros(x.nrows(), x.ncols());
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                let mut plus = x.clone();
                plus[(i, j)] += h;
                let mut minus = x.clone();
                minus[(i, j)] -= h;
                grad[(i, j)] = (f(&plus) - f(&minus)) / (2.0 * h);
            }
        }
        grad
    }

    /// Exact minimizer over `P` (for fixed `Q`) of the objective with `mu = 0`,
    /// from the Kronecker-form normal equations. Small sizes only.
    pub fn unweighted_p_step(problem: &DenseProblem<'_>, q: &DMatrix<f64>) -> DMatrix<f64> {
        let b = problem.t * q;
        kron_solve(problem.v, &b, problem.o, problem.l_v, problem.l_s, problem.lambda1, problem.lambda2)
    }

    /// Exact minimizer over `Q` for fixed `P` with `mu = 0`.
    pub fn unweighted_q_step(problem: &DenseProblem<'_>, p: &DMatrix<f64>) -> DMatrix<f64> {
        let b = problem.v * p;
        let ot = problem.o.transpose();
        kron_solve(problem.t, &b, &ot, problem.l_s, problem.l_v, problem.lambda1, problem.lambda2)
    }

    /// Minimizes `||O - F X B^T||^2 + l1/2 ||X||^2 + l2 [Tr(Y^T Lr Y) + Tr(Y Lc Y^T)]`
    /// with `Y = F X B^T`, by forming the vectorized Hessian explicitly.
    fn kron_solve(
        f: &DMatrix<f64>,
        b: &DMatrix<f64>,
        o: &DMatrix<f64>,
        l_row: &DMatrix<f64>,
        l_col: &DMatrix<f64>,
        lambda1: f64,
        lambda2: f64,
    ) -> DMatrix<f64> {
        let fd = f.ncols();
        let r = b.ncols();
        // Column-major vec: index of X[(a, c)] is a + fd * c.
        let ftf = f.transpose() * f;
        let flf = f.transpose() * l_row * f;
        let btb = b.transpose() * b;
        let blb = b.transpose() * l_col * b;
        let dim = fd * r;
        let mut h = DMatrix::zeros(dim, dim);
        for c in 0..r {
            for d in 0..r {
                for a in 0..fd {
                    for e in 0..fd {
                        let val = 2.0
                            * (ftf[(a, e)] * btb[(c, d)]
                                + lambda2 * flf[(a, e)] * btb[(c, d)]
                                + lambda2 * ftf[(a, e)] * blb[(c, d)]);
                        h[(a + fd * c, e + fd * d)] = val;
                    }
                }
            }
        }
        for k in 0..dim {
            h[(k, k)] += lambda1;
        }
        let rhs_m = f.transpose() * o * b * 2.0;
        let rhs = DMatrix::from_column_slice(dim, 1, rhs_m.as_slice());
        let sol = h.lu().solve(&rhs).expect("nonsingular normal equations");
        DMatrix::from_column_slice(fd, r, sol.as_slice())
    }

    /// Precision and recall at `n` per image, by repeated arg-max selection.
    ///
    /// Returns `(precision, recall)` per image; images with no true tags give
    /// `None`.
    pub fn brute_force_precision_recall(
        scores: &DMatrix<f64>,
        truth: &DMatrix<f64>,
        n: usize,
    ) -> Vec<Option<(f64, f64)>> {
        let (rows, cols) = scores.shape();
        (0..rows)
            .map(|i| {
                let true_count = (0..cols).filter(|&j| truth[(i, j)] != 0.0).count();
                if true_count == 0 {
                    return None;
                }
                let mut taken = vec![false; cols];
                let mut hits = 0usize;
                for _ in 0..n.min(cols) {
                    let mut best: Option<usize> = None;
                    for j in 0..cols {
                        if taken[j] {
                            continue;
                        }
                        best = match best {
                            Some(b) if scores[(i, b)] >= scores[(i, j)] => Some(b),
                            _ => Some(j),
                        };
                    }
                    let b = best.unwrap();
                    taken[b] = true;
                    if truth[(i, b)] != 0.0 {
                        hits += 1;
                    }
                }
                Some((hits as f64 / n as f64, hits as f64 / true_count as f64))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_subspace_points_lie_in_span() {
        let inst = gen_union_of_subspaces(1, 3, 10, 20, 0.0, 4).unwrap();
        let basis = &inst.bases[0];
        for row in inst.points.matrix().row_iter() {
            let x = row.transpose();
            let proj = basis * (basis.transpose() * &x);
            assert!((x - proj).norm() <= 1e-10);
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let a = gen_union_of_subspaces(3, 4, 50, 60, 0.0, 11).unwrap();
        let b = gen_union_of_subspaces(3, 4, 50, 60, 0.0, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.points.n_rows(), 180);
        let spec = PlantedSpec {
            n_images: 10,
            n_tags: 8,
            f_i: 5,
            f_t: 4,
            rank: 2,
            density: 0.25,
            positive: false,
            seed: 3,
        };
        assert_eq!(gen_planted_annotation(&spec).unwrap(), gen_planted_annotation(&spec).unwrap());
        let tb = TaggedBundleSpec::default();
        assert_eq!(gen_tagged_bundle(&tb).unwrap(), gen_tagged_bundle(&tb).unwrap());
    }

    #[test]
    fn invalid_generator_dims() {
        assert!(gen_union_of_subspaces(2, 5, 5, 3, 0.0, 0).is_err());
        assert!(gen_union_of_subspaces(0, 2, 5, 3, 0.0, 0).is_err());
        let spec = PlantedSpec {
            n_images: 4,
            n_tags: 4,
            f_i: 2,
            f_t: 3,
            rank: 3,
            density: 0.5,
            positive: false,
            seed: 0,
        };
        assert!(gen_planted_annotation(&spec).is_err());
    }

    #[test]
    fn rank_one_positive_top_tag_is_global() {
        let spec = PlantedSpec {
            n_images: 30,
            n_tags: 12,
            f_i: 6,
            f_t: 5,
            rank: 1,
            density: 0.1,
            positive: true,
            seed: 8,
        };
        let planted = gen_planted_annotation(&spec).unwrap();
        let tag_strength = planted.t.matrix() * &planted.q_star;
        let dominant = (0..12)
            .max_by(|&a, &b| tag_strength[a].partial_cmp(&tag_strength[b]).unwrap())
            .unwrap();
        for i in 0..30 {
            assert!(planted.o_star.contains(i, dominant));
        }
    }

    #[test]
    fn full_density_covers_everything() {
        let spec = PlantedSpec {
            n_images: 6,
            n_tags: 5,
            f_i: 4,
            f_t: 3,
            rank: 2,
            density: 1.0,
            positive: false,
            seed: 2,
        };
        let planted = gen_planted_annotation(&spec).unwrap();
        assert_eq!(planted.o_star.nnz(), 30);
        assert!((planted.scores.amax() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn preserving_rate_examples() {
        let labels = [0, 0, 1, 1];
        let block = DMatrix::from_row_slice(4, 4, &[
            0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0,
        ]);
        assert_eq!(subspace_preserving_rate(&block, &labels).unwrap().rate, 1.0);

        // k = 3 blocks of m = 4 among n = 12: uniform mass gives (m - 1) / (n - 1).
        let labels: Vec<usize> = (0..12).map(|i| i / 4).collect();
        let uniform = DMatrix::from_fn(12, 12, |i, j| if i == j { 0.0 } else { 0.5 });
        let rate = subspace_preserving_rate(&uniform, &labels).unwrap().rate;
        assert!((rate - 3.0 / 11.0).abs() < 1e-15);

        assert_eq!(
            subspace_preserving_rate(&DMatrix::zeros(4, 4), &[0, 0, 1, 1]),
            Err(Error::DegenerateRepresentation)
        );
        let partial = DMatrix::from_fn(3, 3, |i, j| if i == 0 && j == 1 { 1.0 } else { 0.0 });
        let r = subspace_preserving_rate(&partial, &[0, 0, 1]).unwrap();
        assert_eq!(r.excluded_rows, vec![1, 2]);
    }

    #[test]
    fn accuracy_examples() {
        let truth: Vec<usize> = (0..180).map(|i| i / 60).collect();
        assert_eq!(clustering_accuracy(&truth, &truth).unwrap(), 1.0);
        let flipped: Vec<usize> = truth.iter().map(|&l| (l + 1) % 3).collect();
        assert_eq!(clustering_accuracy(&flipped, &truth).unwrap(), 1.0);
        let mut off = truth.clone();
        for l in off.iter_mut().take(5) {
            *l = 2;
        }
        assert!((clustering_accuracy(&off, &truth).unwrap() - 175.0 / 180.0).abs() < 1e-15);
        assert!(clustering_accuracy(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn hungarian_matches_exhaustive() {
        let mut rng = seeded_rng(5);
        for _ in 0..50 {
            let size = rng.random_range(1..=7);
            let confusion: Vec<Vec<usize>> = (0..size)
                .map(|_| (0..size).map(|_| rng.random_range(0..20)).collect())
                .collect();
            assert_eq!(hungarian_max(&confusion), best_permutation(&confusion));
        }
    }

    #[test]
    fn accuracy_above_eight_labels() {
        let truth: Vec<usize> = (0..100).map(|i| i % 10).collect();
        let pred: Vec<usize> = truth.iter().map(|&l| (l * 3 + 1) % 10).collect();
        assert_eq!(clustering_accuracy(&pred, &truth).unwrap(), 1.0);
    }
}
