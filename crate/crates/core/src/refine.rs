//! Tag refinement by inductive matrix completion.
//!
//! The refined matrix is `Ô = V P Q^T T^T` with `P` (`f_i x r`) and `Q`
//! (`f_t x r`) minimizing
//!
//! ```text
//! sum_ij w_ij (O - Ô)_ij^2 + lambda1/2 (|P|^2 + |Q|^2)
//!     + lambda2 [Tr(Ô^T L_v Ô) + Tr(Ô L_s Ô^T)]
//! ```
//!
//! where `w_ij = 1 - mu` on unannotated positions of `O` and `1` elsewhere,
//! `L_v` is the image-similarity Laplacian and `L_s` the tag-similarity
//! Laplacian. The weighted loss equals `|O - Ô|^2 - mu |U_Omega(O - Ô)|^2`.
//!
//! Minimization alternates between `P` and `Q`. With one factor fixed the
//! objective is a convex quadratic in the other, solved by matrix-free
//! conjugate gradient warm-started from the current factor. No dense
//! `N_i x N_t` matrix is formed while solving.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::cg::conjugate_gradient;
use crate::error::{invalid, Error, Result};
use crate::seeded_rng;
use crate::tagmat::{FeatureMatrix, GraphLaplacian, TagMatrix};
use crate::testkit::gaussian_matrix;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct RefineConfig {
    pub rank: usize,
    /// Frobenius penalty on the factors (trace-norm surrogate).
    pub lambda1: f64,
    /// Weight of both Laplacian smoothness terms.
    pub lambda2: f64,
    /// Discount on unannotated positions, in `[0, 1)`.
    pub mu: f64,
    pub outer_iters: usize,
    pub cg_iters: usize,
    pub cg_tol: f64,
    /// Stop early once the relative objective change of an outer iteration
    /// falls below this; zero disables early stopping.
    pub obj_tol: f64,
    pub seed: u64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            rank: 10,
            lambda1: 1.0,
            lambda2: 1e-4,
            mu: 0.4,
            outer_iters: 20,
            cg_iters: 50,
            cg_tol: 1e-6,
            obj_tol: 1e-6,
            seed: 0,
        }
    }
}

impl RefineConfig {
    /// Checks the configuration against the feature dimensions.
    pub fn validate(&self, f_i: usize, f_t: usize) -> Result<()> {
        if self.rank == 0 {
            return Err(invalid("refine.rank", "must be at least 1"));
        }
        if self.rank > f_i.min(f_t) {
            return Err(invalid(
                "refine.rank",
                alloc::format!("must not exceed min(f_i, f_t) = {}", f_i.min(f_t)),
            ));
        }
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return Err(invalid("refine.lambda1", "must be nonnegative and finite"));
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return Err(invalid("refine.lambda2", "must be nonnegative and finite"));
        }
        if !(self.mu >= 0.0 && self.mu < 1.0) {
            return Err(invalid("refine.mu", "must lie in [0, 1)"));
        }
        if !(self.cg_tol > 0.0) {
            return Err(invalid("refine.cg_tol", "must be positive"));
        }
        if !(self.obj_tol >= 0.0) {
            return Err(invalid("refine.obj_tol", "must be nonnegative"));
        }
        Ok(())
    }
}

/// Low-rank factors with `Ô = V P Q^T T^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

impl FactorPair {
    /// Gaussian entries scaled by `1 / sqrt(r)`.
    pub fn random(f_i: usize, f_t: usize, rank: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let scale = 1.0 / libm::sqrt(rank as f64);
        let p = gaussian_matrix(&mut rng, f_i, rank) * scale;
        let q = gaussian_matrix(&mut rng, f_t, rank) * scale;
        Self { p, q }
    }

    pub fn rank(&self) -> usize {
        self.p.ncols()
    }

    /// `V P Q^T T^T` for arbitrary image and tag feature rows.
    pub fn predict(&self, v: &FeatureMatrix, t: &FeatureMatrix) -> Result<DMatrix<f64>> {
        if v.dim() != self.p.nrows() {
            return Err(Error::DimensionMismatch {
                context: "image feature dimension",
                expected: self.p.nrows(),
                found: v.dim(),
            });
        }
        if t.dim() != self.q.nrows() {
            return Err(Error::DimensionMismatch {
                context: "tag feature dimension",
                expected: self.q.nrows(),
                found: t.dim(),
            });
        }
        Ok((v.matrix() * &self.p) * (t.matrix() * &self.q).transpose())
    }
}

/// Which factor is free in a half-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    P,
    Q,
}

/// Per-entry loss weights: `1 - mu` on the unannotated set Omega, `1` on the
/// annotated support of the tag matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightMask<'a> {
    tags: &'a TagMatrix,
    mu: f64,
}

impl<'a> WeightMask<'a> {
    pub fn new(tags: &'a TagMatrix, mu: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&mu) {
            return Err(invalid("refine.mu", "must lie in [0, 1)"));
        }
        Ok(Self { tags, mu })
    }

    pub fn in_omega(&self, image: usize, tag: usize) -> bool {
        !self.tags.contains(image, tag)
    }

    pub fn weight(&self, image: usize, tag: usize) -> f64 {
        if self.in_omega(image, tag) {
            1.0 - self.mu
        } else {
            1.0
        }
    }

    /// Number of unannotated positions.
    pub fn omega_len(&self) -> usize {
        self.tags.n_images() * self.tags.n_tags() - self.tags.nnz()
    }
}

/// Refinement inputs with the feature-space Gram matrices precomputed.
#[derive(Debug, Clone)]
pub struct RefineProblem<'a> {
    tags: &'a TagMatrix,
    v: &'a DMatrix<f64>,
    t: &'a DMatrix<f64>,
    lambda1: f64,
    lambda2: f64,
    mu: f64,
    vtv: DMatrix<f64>,
    ttt: DMatrix<f64>,
    /// `V^T L_v V`, `T^T L_s T`; only formed when `lambda2 > 0`.
    vlv: Option<DMatrix<f64>>,
    tlt: Option<DMatrix<f64>>,
    /// Annotated entries with tag-major indexing, for the `Q` step.
    transposed: Vec<(usize, usize, f64)>,
}

impl<'a> RefineProblem<'a> {
    pub fn new(
        tags: &'a TagMatrix,
        v: &'a FeatureMatrix,
        t: &'a FeatureMatrix,
        l_v: &GraphLaplacian,
        l_s: &GraphLaplacian,
        config: &RefineConfig,
    ) -> Result<Self> {
        let n_i = tags.n_images();
        let n_t = tags.n_tags();
        let checks = [
            ("image feature rows", n_i, v.n_rows()),
            ("tag feature rows", n_t, t.n_rows()),
            ("image Laplacian size", n_i, l_v.size()),
            ("tag Laplacian size", n_t, l_s.size()),
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
        config.validate(v.dim(), t.dim())?;
        let vm = v.matrix();
        let tm = t.matrix();
        let (vlv, tlt) = if config.lambda2 > 0.0 {
            (
                Some(vm.transpose() * (l_v.matrix() * vm)),
                Some(tm.transpose() * (l_s.matrix() * tm)),
            )
        } else {
            (None, None)
        };
        let mut transposed: Vec<(usize, usize, f64)> = tags.iter().map(|(i, j, o)| (j, i, o)).collect();
        transposed.sort_unstable_by_key(|&(i, j, _)| (i, j));
        Ok(Self {
            tags,
            v: vm,
            t: tm,
            lambda1: config.lambda1,
            lambda2: config.lambda2,
            mu: config.mu,
            vtv: vm.transpose() * vm,
            ttt: tm.transpose() * tm,
            vlv,
            tlt,
            transposed,
        })
    }

    pub fn mask(&self) -> WeightMask<'a> {
        WeightMask {
            tags: self.tags,
            mu: self.mu,
        }
    }

    fn check_factors(&self, factors: &FactorPair) -> Result<()> {
        let checks = [
            ("P rows", self.v.ncols(), factors.p.nrows()),
            ("Q rows", self.t.ncols(), factors.q.nrows()),
            ("Q rank", factors.p.ncols(), factors.q.ncols()),
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
        Ok(())
    }

    /// Objective value at `factors`.
    pub fn objective(&self, factors: &FactorPair) -> Result<f64> {
        self.check_factors(factors)?;
        let a = self.v * &factors.p;
        let b = self.t * &factors.q;
        let n_t = self.tags.n_tags();
        let w_off = 1.0 - self.mu;
        let mut loss = 0.0;
        let mut row = DMatrix::<f64>::zeros(1, n_t);
        let bt = b.transpose();
        for i in 0..self.tags.n_images() {
            a.row(i).mul_to(&bt, &mut row);
            let (cols, vals) = self.tags.row(i);
            let mut k = 0;
            for j in 0..n_t {
                let (o, w) = if k < cols.len() && cols[k] == j {
                    k += 1;
                    (vals[k - 1], 1.0)
                } else {
                    (0.0, w_off)
                };
                let d = o - row[j];
                loss += w * d * d;
            }
        }
        let reg = 0.5 * self.lambda1 * (factors.p.norm_squared() + factors.q.norm_squared());
        let smooth = match (&self.vlv, &self.tlt) {
            (Some(vlv), Some(tlt)) => {
                let ata = factors.p.transpose() * &self.vtv * &factors.p;
                let btb = factors.q.transpose() * &self.ttt * &factors.q;
                let alva = factors.p.transpose() * vlv * &factors.p;
                let blsb = factors.q.transpose() * tlt * &factors.q;
                self.lambda2 * ((alva * &btb).trace() + (blsb * &ata).trace())
            }
            _ => 0.0,
        };
        Ok(loss + reg + smooth)
    }

    fn half_step_operator(&self, factors: &FactorPair, free: Factor) -> HalfStep<'_> {
        match free {
            Factor::P => HalfStep::new(
                self.v,
                &self.vtv,
                self.vlv.as_ref(),
                self.t * &factors.q,
                &factors.q,
                &self.ttt,
                self.tlt.as_ref(),
                Entries::RowMajor(self.tags),
                self,
            ),
            Factor::Q => HalfStep::new(
                self.t,
                &self.ttt,
                self.tlt.as_ref(),
                self.v * &factors.p,
                &factors.p,
                &self.vtv,
                self.vlv.as_ref(),
                Entries::Transposed(&self.transposed),
                self,
            ),
        }
    }

    /// Gradient of the objective with respect to the free factor.
    pub fn gradient(&self, factors: &FactorPair, free: Factor) -> Result<DMatrix<f64>> {
        self.check_factors(factors)?;
        let op = self.half_step_operator(factors, free);
        let x = match free {
            Factor::P => &factors.p,
            Factor::Q => &factors.q,
        };
        Ok(op.apply(x) - op.rhs())
    }

    /// Minimizes over the free factor with the other held fixed.
    pub fn half_step(&self, factors: &mut FactorPair, free: Factor, cg_iters: usize, cg_tol: f64) -> Result<usize> {
        self.check_factors(factors)?;
        let op = self.half_step_operator(factors, free);
        let x0 = match free {
            Factor::P => factors.p.clone(),
            Factor::Q => factors.q.clone(),
        };
        let rhs = op.rhs();
        let out = conjugate_gradient(|d| op.apply(d), &rhs, x0, cg_iters, cg_tol)?;
        match free {
            Factor::P => factors.p = out.solution,
            Factor::Q => factors.q = out.solution,
        }
        Ok(out.iterations)
    }
}

enum Entries<'a> {
    RowMajor(&'a TagMatrix),
    Transposed(&'a [(usize, usize, f64)]),
}

impl Entries<'_> {
    fn for_each(&self, mut f: impl FnMut(usize, usize, f64)) {
        match self {
            Entries::RowMajor(tags) => tags.iter().for_each(|(i, j, o)| f(i, j, o)),
            Entries::Transposed(list) => list.iter().for_each(|&(i, j, o)| f(i, j, o)),
        }
    }
}

/// Quadratic subproblem in one factor `X`, with model `Y = F X B^T`.
///
/// Hessian-vector product:
/// `2 [(1-mu) F^T F D B^T B + mu F^T (S o (F D B^T)) B
///     + lambda2 F^T L_r F D B^T B + lambda2 F^T F D B^T L_c B] + lambda1 D`,
/// where `S` is the annotated support. Right-hand side: `2 F^T O B`.
struct HalfStep<'a> {
    feat: &'a DMatrix<f64>,
    gram: &'a DMatrix<f64>,
    lap_gram: Option<&'a DMatrix<f64>>,
    loadings: DMatrix<f64>,
    btb: DMatrix<f64>,
    /// `(1 - mu) B^T B + lambda2 B^T L_c B`
    mixed: DMatrix<f64>,
    entries: Entries<'a>,
    mu: f64,
    lambda1: f64,
    lambda2: f64,
}

impl<'a> HalfStep<'a> {
    #[allow(clippy::too_many_arguments)]
    fn new(
        feat: &'a DMatrix<f64>,
        gram: &'a DMatrix<f64>,
        lap_gram: Option<&'a DMatrix<f64>>,
        loadings: DMatrix<f64>,
        fixed: &DMatrix<f64>,
        fixed_gram: &DMatrix<f64>,
        fixed_lap_gram: Option<&DMatrix<f64>>,
        entries: Entries<'a>,
        problem: &RefineProblem<'_>,
    ) -> Self {
        let btb = fixed.transpose() * fixed_gram * fixed;
        let mut mixed = &btb * (1.0 - problem.mu);
        if let Some(lg) = fixed_lap_gram {
            mixed += fixed.transpose() * lg * fixed * problem.lambda2;
        }
        Self {
            feat,
            gram,
            lap_gram,
            loadings,
            btb,
            mixed,
            entries,
            mu: problem.mu,
            lambda1: problem.lambda1,
            lambda2: problem.lambda2,
        }
    }

    fn apply(&self, d: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = self.gram * d * &self.mixed;
        if let Some(lg) = self.lap_gram {
            out += lg * d * &self.btb * self.lambda2;
        }
        if self.mu > 0.0 {
            let fd = self.feat * d;
            let r = d.ncols();
            let mut acc = DMatrix::<f64>::zeros(fd.nrows(), r);
            let b = &self.loadings;
            self.entries.for_each(|i, j, _| {
                let mut s = 0.0;
                for c in 0..r {
                    s += fd[(i, c)] * b[(j, c)];
                }
                for c in 0..r {
                    acc[(i, c)] += s * b[(j, c)];
                }
            });
            out += self.feat.transpose() * acc * self.mu;
        }
        out * 2.0 + d * self.lambda1
    }

    fn rhs(&self) -> DMatrix<f64> {
        let r = self.loadings.ncols();
        let mut acc = DMatrix::<f64>::zeros(self.feat.nrows(), r);
        let b = &self.loadings;
        self.entries.for_each(|i, j, o| {
            for c in 0..r {
                acc[(i, c)] += o * b[(j, c)];
            }
        });
        self.feat.transpose() * acc * 2.0
    }
}

/// Objective value for explicit inputs.
pub fn objective(
    tags: &TagMatrix,
    v: &FeatureMatrix,
    t: &FeatureMatrix,
    factors: &FactorPair,
    l_v: &GraphLaplacian,
    l_s: &GraphLaplacian,
    config: &RefineConfig,
) -> Result<f64> {
    let cfg = RefineConfig {
        rank: factors.rank(),
        ..config.clone()
    };
    RefineProblem::new(tags, v, t, l_v, l_s, &cfg)?.objective(factors)
}

/// Gradient with respect to the `free` factor for explicit inputs.
#[allow(clippy::too_many_arguments)]
pub fn gradient(
    tags: &TagMatrix,
    v: &FeatureMatrix,
    t: &FeatureMatrix,
    factors: &FactorPair,
    free: Factor,
    l_v: &GraphLaplacian,
    l_s: &GraphLaplacian,
    config: &RefineConfig,
) -> Result<DMatrix<f64>> {
    let cfg = RefineConfig {
        rank: factors.rank(),
        ..config.clone()
    };
    RefineProblem::new(tags, v, t, l_v, l_s, &cfg)?.gradient(factors, free)
}

/// Result of the alternating solver.
#[derive(Debug, Clone)]
pub struct Solution {
    pub factors: FactorPair,
    /// Objective at the start and after every half-step.
    pub trace: Vec<f64>,
    pub outer_iterations: usize,
    pub cg_iterations: usize,
}

/// Alternating minimization from seeded random factors.
pub fn solve_alternating(
    tags: &TagMatrix,
    v: &FeatureMatrix,
    t: &FeatureMatrix,
    l_v: &GraphLaplacian,
    l_s: &GraphLaplacian,
    config: &RefineConfig,
) -> Result<Solution> {
    config.validate(v.dim(), t.dim())?;
    let init = FactorPair::random(v.dim(), t.dim(), config.rank, config.seed);
    solve_alternating_from(tags, v, t, l_v, l_s, config, init)
}

/// Alternating minimization from given factors (resuming a previous run).
pub fn solve_alternating_from(
    tags: &TagMatrix,
    v: &FeatureMatrix,
    t: &FeatureMatrix,
    l_v: &GraphLaplacian,
    l_s: &GraphLaplacian,
    config: &RefineConfig,
    init: FactorPair,
) -> Result<Solution> {
    let problem = RefineProblem::new(tags, v, t, l_v, l_s, config)?;
    let mut factors = init;
    if factors.rank() != config.rank {
        return Err(Error::DimensionMismatch {
            context: "initial factor rank",
            expected: config.rank,
            found: factors.rank(),
        });
    }
    let mut trace = Vec::with_capacity(2 * config.outer_iters + 1);
    trace.push(problem.objective(&factors)?);
    let mut cg_iterations = 0;
    let mut outer_iterations = 0;
    for _ in 0..config.outer_iters {
        let before = *trace.last().expect("trace starts nonempty");
        for free in [Factor::P, Factor::Q] {
            cg_iterations += problem.half_step(&mut factors, free, config.cg_iters, config.cg_tol)?;
            trace.push(problem.objective(&factors)?);
        }
        outer_iterations += 1;
        let after = *trace.last().expect("trace nonempty");
        if config.obj_tol > 0.0 && (before - after).abs() <= config.obj_tol * before.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(Solution {
        factors,
        trace,
        outer_iterations,
        cg_iterations,
    })
}

/// Refined scores together with the factors that produced them.
#[derive(Debug, Clone)]
pub struct Refinement {
    /// Raw `Ô`, used for ranking.
    pub scores: DMatrix<f64>,
    pub solution: Solution,
}

impl Refinement {
    /// `Ô` clamped to `[0, 1]` as a tag matrix.
    pub fn to_tags(&self) -> Result<TagMatrix> {
        TagMatrix::from_scores_clamped(&self.scores)
    }
}

/// Solves for the factors and returns `Ô = V P Q^T T^T`.
pub fn refine(
    tags: &TagMatrix,
    v: &FeatureMatrix,
    t: &FeatureMatrix,
    l_v: &GraphLaplacian,
    l_s: &GraphLaplacian,
    config: &RefineConfig,
) -> Result<Refinement> {
    let solution = solve_alternating(tags, v, t, l_v, l_s, config)?;
    let scores = solution.factors.predict(v, t)?;
    Ok(Refinement { scores, solution })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagmat::{cosine_similarity_graph, graph_laplacian, Rectification};
    use crate::testkit::oracle::{self, DenseProblem};
    use rand::Rng;

    struct Instance {
        tags: TagMatrix,
        v: FeatureMatrix,
        t: FeatureMatrix,
        l_v: GraphLaplacian,
        l_s: GraphLaplacian,
    }

    fn instance(n_i: usize, n_t: usize, f_i: usize, f_t: usize, seed: u64) -> Instance {
        let mut rng = seeded_rng(seed);
        let v = FeatureMatrix::new(gaussian_matrix(&mut rng, n_i, f_i)).unwrap();
        let t = FeatureMatrix::new(gaussian_matrix(&mut rng, n_t, f_t)).unwrap();
        let mut trip = Vec::new();
        for i in 0..n_i {
            for j in 0..n_t {
                if rng.random::<f64>() < 0.4 {
                    trip.push((i, j, rng.random_range(0.2..=1.0)));
                }
            }
        }
        let tags = TagMatrix::from_triplets(n_i, n_t, trip).unwrap();
        let l_v = graph_laplacian(&cosine_similarity_graph(&v, Rectification::Clamp).unwrap()).unwrap();
        let l_s = graph_laplacian(&cosine_similarity_graph(&t, Rectification::Clamp).unwrap()).unwrap();
        Instance { tags, v, t, l_v, l_s }
    }

    fn config(rank: usize, lambda1: f64, lambda2: f64, mu: f64) -> RefineConfig {
        RefineConfig {
            rank,
            lambda1,
            lambda2,
            mu,
            outer_iters: 20,
            cg_iters: 200,
            cg_tol: 1e-10,
            obj_tol: 0.0,
            seed: 1,
        }
    }

    fn dense<'a>(inst: &'a Instance, o: &'a DMatrix<f64>, cfg: &RefineConfig) -> DenseProblem<'a> {
        DenseProblem {
            o,
            v: inst.v.matrix(),
            t: inst.t.matrix(),
            l_v: inst.l_v.matrix(),
            l_s: inst.l_s.matrix(),
            lambda1: cfg.lambda1,
            lambda2: cfg.lambda2,
            mu: cfg.mu,
        }
    }

    #[test]
    fn objective_matches_dense_oracle() {
        let inst = instance(4, 3, 3, 3, 2);
        let cfg = config(2, 0.3, 0.7, 0.4);
        let factors = FactorPair::random(3, 3, 2, 9);
        let o = inst.tags.to_dense();
        let got = objective(&inst.tags, &inst.v, &inst.t, &factors, &inst.l_v, &inst.l_s, &cfg).unwrap();
        let want = oracle::objective(&dense(&inst, &o, &cfg), &factors.p, &factors.q);
        assert!((got - want).abs() <= 1e-10 * want.abs());
    }

    #[test]
    fn perfect_fit_has_zero_objective() {
        let mut rng = seeded_rng(4);
        let v = FeatureMatrix::new(gaussian_matrix(&mut rng, 5, 3).abs()).unwrap();
        let t = FeatureMatrix::new(gaussian_matrix(&mut rng, 4, 3).abs()).unwrap();
        let mut factors = FactorPair {
            p: gaussian_matrix(&mut rng, 3, 2).abs(),
            q: gaussian_matrix(&mut rng, 3, 2).abs(),
        };
        let scores = factors.predict(&v, &t).unwrap();
        factors.p /= scores.amax();
        let tags = TagMatrix::from_dense(&factors.predict(&v, &t).unwrap()).unwrap();
        let cfg = config(2, 0.0, 0.0, 0.5);
        let l = |n| GraphLaplacian::zeros(n);
        let value = objective(&tags, &v, &t, &factors, &l(5), &l(4), &cfg).unwrap();
        assert!(value.abs() < 1e-25);
    }

    #[test]
    fn mu_zero_is_plain_squared_loss() {
        let inst = instance(5, 4, 3, 3, 7);
        let cfg = config(2, 0.5, 0.2, 0.0);
        let factors = FactorPair::random(3, 3, 2, 1);
        let o = inst.tags.to_dense();
        let o_hat = factors.predict(&inst.v, &inst.t).unwrap();
        let p = RefineProblem::new(&inst.tags, &inst.v, &inst.t, &inst.l_v, &inst.l_s, &cfg).unwrap();
        let no_reg = RefineConfig { lambda1: 0.0, lambda2: 0.0, ..cfg.clone() };
        let bare = RefineProblem::new(&inst.tags, &inst.v, &inst.t, &inst.l_v, &inst.l_s, &no_reg).unwrap();
        let plain = (&o - &o_hat).norm_squared();
        assert!((bare.objective(&factors).unwrap() - plain).abs() < 1e-10 * plain);
        assert!(p.objective(&factors).unwrap() > plain);
    }

    #[test]
    fn zero_factor_gradient() {
        let inst = instance(4, 3, 3, 3, 5);
        let cfg = config(2, 0.0, 0.5, 0.3);
        let zero = FactorPair {
            p: DMatrix::zeros(3, 2),
            q: DMatrix::zeros(3, 2),
        };
        let g = gradient(&inst.tags, &inst.v, &inst.t, &zero, Factor::P, &inst.l_v, &inst.l_s, &cfg).unwrap();
        assert_eq!(g, DMatrix::zeros(3, 2));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let inst = instance(5, 4, 4, 3, seed);
            let cfg = config(2, 0.3, 0.4, 0.6);
            let factors = FactorPair::random(4, 3, 2, seed + 100);
            let o = inst.tags.to_dense();
            let dp = dense(&inst, &o, &cfg);
            let gp = gradient(&inst.tags, &inst.v, &inst.t, &factors, Factor::P, &inst.l_v, &inst.l_s, &cfg).unwrap();
            let fd = oracle::finite_difference_gradient(|p| oracle::objective(&dp, p, &factors.q), &factors.p, 1e-5);
            assert!((&gp - &fd).amax() <= 1e-5 * fd.amax().max(1.0));
            let gq = gradient(&inst.tags, &inst.v, &inst.t, &factors, Factor::Q, &inst.l_v, &inst.l_s, &cfg).unwrap();
            let fd = oracle::finite_difference_gradient(|q| oracle::objective(&dp, &factors.p, q), &factors.q, 1e-5);
            assert!((&gq - &fd).amax() <= 1e-5 * fd.amax().max(1.0));
        }
    }

    #[test]
    fn unweighted_gradient_matches_classic_form() {
        // lambda2 = 0, mu = 0, fully observed O: grad_P = -2 V^T (O - V P Q^T T^T) T Q + lambda1 P
        let mut rng = seeded_rng(12);
        let n_i = 6;
        let n_t = 5;
        let o = DMatrix::from_fn(n_i, n_t, |_, _| rng.random_range(0.1..1.0));
        let inst = instance(n_i, n_t, 4, 3, 12);
        let tags = TagMatrix::from_dense(&o).unwrap();
        let cfg = config(2, 0.25, 0.0, 0.0);
        let f = FactorPair::random(4, 3, 2, 3);
        let g = gradient(&tags, &inst.v, &inst.t, &f, Factor::P, &inst.l_v, &inst.l_s, &cfg).unwrap();
        let (v, t) = (inst.v.matrix(), inst.t.matrix());
        let resid = &o - v * &f.p * f.q.transpose() * t.transpose();
        let classic = v.transpose() * resid * t * &f.q * -2.0 + &f.p * 0.25;
        assert!((g - classic).amax() < 1e-10);
    }

    #[test]
    fn half_steps_never_increase_objective() {
        for seed in 0..4 {
            let inst = instance(12, 8, 5, 4, seed);
            let sol = solve_alternating(&inst.tags, &inst.v, &inst.t, &inst.l_v, &inst.l_s, &config(3, 0.1, 0.05, 0.7))
                .unwrap();
            for w in sol.trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn huge_lambda1_shrinks_factors() {
        let inst = instance(8, 6, 4, 3, 3);
        let r = refine(&inst.tags, &inst.v, &inst.t, &inst.l_v, &inst.l_s, &config(2, 1e8, 0.0, 0.0)).unwrap();
        assert!(r.scores.amax() < 1e-6);
        assert!(r.solution.factors.p.amax() < 1e-6);
    }

    #[test]
    fn zero_tags_refine_to_zero() {
        let inst = instance(6, 5, 3, 3, 8);
        let zero = TagMatrix::zeros(6, 5).unwrap();
        let r = refine(&zero, &inst.v, &inst.t, &inst.l_v, &inst.l_s, &config(2, 0.5, 0.1, 0.3)).unwrap();
        assert_eq!(r.scores.amax(), 0.0);
        assert_eq!(r.to_tags().unwrap().nnz(), 0);
    }

    #[test]
    fn lambda2_zero_ignores_laplacians() {
        let inst = instance(7, 5, 4, 3, 6);
        let cfg = config(2, 0.2, 0.0, 0.4);
        let a = refine(&inst.tags, &inst.v, &inst.t, &inst.l_v, &inst.l_s, &cfg).unwrap();
        let b = refine(&inst.tags, &inst.v, &inst.t, &GraphLaplacian::zeros(7), &GraphLaplacian::zeros(5), &cfg).unwrap();
        assert_eq!(a.scores, b.scores);
    }

    #[test]
    fn rejects_bad_config_and_shapes() {
        let inst = instance(4, 3, 3, 3, 1);
        let bad_mu = config(2, 0.1, 0.1, 1.2);
        let err = refine(&inst.tags, &inst.v, &inst.t, &inst.l_v, &inst.l_s, &bad_mu).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { field: "refine.mu", .. }));
        let bad_rank = config(4, 0.1, 0.1, 0.1);
        assert!(refine(&inst.tags, &inst.v, &inst.t, &inst.l_v, &inst.l_s, &bad_rank).is_err());
        let wrong = GraphLaplacian::zeros(5);
        assert!(refine(&inst.tags, &inst.v, &inst.t, &wrong, &inst.l_s, &config(2, 0.1, 0.1, 0.1)).is_err());
        assert!(WeightMask::new(&inst.tags, 1.0).is_err());
    }

    #[test]
    fn mask_partitions_positions() {
        let inst = instance(5, 4, 3, 3, 2);
        let mask = WeightMask::new(&inst.tags, 0.7).unwrap();
        let mut omega = 0;
        for i in 0..5 {
            for j in 0..4 {
                let w = mask.weight(i, j);
                if mask.in_omega(i, j) {
                    omega += 1;
                    assert!((w - 0.3).abs() < 1e-15);
                } else {
                    assert_eq!(w, 1.0);
                }
            }
        }
        assert_eq!(omega, mask.omega_len());
    }

    #[test]
    fn mu_zero_matches_separate_unweighted_solver() {
        let inst = instance(9, 7, 4, 3, 21);
        let cfg = RefineConfig {
            cg_iters: 500,
            cg_tol: 1e-14,
            ..config(2, 0.3, 0.2, 0.0)
        };
        let o = inst.tags.to_dense();
        let dp = dense(&inst, &o, &cfg);
        let sol = solve_alternating(&inst.tags, &inst.v, &inst.t, &inst.l_v, &inst.l_s, &cfg).unwrap();
        let init = FactorPair::random(4, 3, 2, cfg.seed);
        let (mut p, mut q) = (init.p, init.q);
        let mut trace = vec![oracle::objective(&dp, &p, &q)];
        for _ in 0..cfg.outer_iters {
            p = oracle::unweighted_p_step(&dp, &q);
            trace.push(oracle::objective(&dp, &p, &q));
            q = oracle::unweighted_q_step(&dp, &p);
            trace.push(oracle::objective(&dp, &p, &q));
        }
        assert_eq!(trace.len(), sol.trace.len());
        for (a, b) in trace.iter().zip(&sol.trace) {
            assert!((a - b).abs() <= 1e-8 * a.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn larger_mu_fits_annotated_entries_tighter() {
        let inst = instance(15, 10, 5, 4, 31);
        let mut last = f64::INFINITY;
        for mu in [0.0, 0.3, 0.6, 0.9] {
            let cfg = RefineConfig {
                outer_iters: 60,
                ..config(3, 0.05, 0.0, mu)
            };
            let r = refine(&inst.tags, &inst.v, &inst.t, &inst.l_v, &inst.l_s, &cfg).unwrap();
            let annotated: f64 = inst.tags.iter().map(|(i, j, o)| (o - r.scores[(i, j)]).powi(2)).sum();
            assert!(annotated <= last + 1e-9, "mu {mu}: {annotated} > {last}");
            last = annotated;
        }
    }

    #[test]
    fn planted_factors_are_recovered() {
        use crate::testkit::{gen_planted_annotation, PlantedSpec};
        use crate::tagmat::top_n_tags;
        let planted = gen_planted_annotation(&PlantedSpec {
            n_images: 40,
            n_tags: 25,
            f_i: 8,
            f_t: 6,
            rank: 3,
            density: 0.2,
            positive: true,
            seed: 5,
        })
        .unwrap();
        let tags = TagMatrix::from_dense(&planted.scores).unwrap();
        let cfg = RefineConfig {
            outer_iters: 200,
            ..config(3, 1e-8, 0.0, 0.0)
        };
        let l = |n| GraphLaplacian::zeros(n);
        let r = refine(&tags, &planted.v, &planted.t, &l(40), &l(25), &cfg).unwrap();
        let rel = (&r.scores - &planted.scores).norm() / planted.scores.norm();
        assert!(rel <= 1e-2, "relative error {rel}");
        assert_eq!(top_n_tags(&r.scores, 5), top_n_tags(&planted.scores, 5));
    }
}
