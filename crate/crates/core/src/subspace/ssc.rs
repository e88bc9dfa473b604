use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::tagmat::{FeatureMatrix, SimilarityGraph};

/// Parameters of the sparse self-representation solver.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SscConfig {
    /// Weight of the squared reconstruction error.
    pub mu: f64,
    pub max_iters: usize,
    /// Stopping tolerance on all constraint residuals.
    pub tol: f64,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub penalty_max: f64,
    /// Scale feature rows to unit norm before solving.
    pub normalize: bool,
}

impl Default for SscConfig {
    fn default() -> Self {
        Self {
            mu: 10.0,
            max_iters: 2000,
            tol: 1e-5,
            penalty_init: 0.1,
            penalty_growth: 1.1,
            penalty_max: 1e8,
            normalize: true,
        }
    }
}

impl SscConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(invalid("ssc.mu", "must be positive and finite"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("ssc.tol", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(invalid("ssc.max_iters", "must be at least 1"));
        }
        if !(self.penalty_init > 0.0) {
            return Err(invalid("ssc.penalty_init", "must be positive"));
        }
        if !(self.penalty_growth > 1.0) {
            return Err(invalid("ssc.penalty_growth", "must exceed 1"));
        }
        if !(self.penalty_max >= self.penalty_init) {
            return Err(invalid("ssc.penalty_max", "must be at least penalty_init"));
        }
        Ok(())
    }
}

/// Constraint violations of a self-representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SscResiduals {
    /// `max_i |sum_j z_ij - 1|`.
    pub affine: f64,
    /// `||X - Z X - E||_F / ||X||_F`.
    pub reconstruction: f64,
    /// Largest gap between the sparse iterate and its least-squares twin.
    pub coupling: f64,
}

/// Sparse coefficients `z` with `X = z X + e`, rows as images.
///
/// `e` is stored with the same orientation as the feature matrix (one row per
/// image), i.e. it is the transpose of the column-major convention.
#[derive(Debug, Clone)]
pub struct SelfRepresentation {
    pub z: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub residuals: SscResiduals,
    pub iterations: usize,
    pub converged: bool,
    /// `||z||_1 + mu ||e||_F^2` after every iteration.
    pub objective_trace: Vec<f64>,
}

impl SelfRepresentation {
    pub fn objective(&self, mu: f64) -> f64 {
        self.z.iter().map(|v| v.abs()).sum::<f64>() + mu * self.e.norm_squared()
    }
}

fn soft_threshold(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

/// Applies `R -> R (c X X^T + I + 1 1^T)^{-1}`.
///
/// Uses the Woodbury identity through `[X, 1]` when the feature dimension is
/// below the number of points, and a direct factorization otherwise.
struct SystemSolver<'a> {
    x: &'a DMatrix<f64>,
    wide: DMatrix<f64>,
    gram_wide: DMatrix<f64>,
}

impl<'a> SystemSolver<'a> {
    fn new(x: &'a DMatrix<f64>) -> Self {
        let n = x.nrows();
        let f = x.ncols();
        let wide = DMatrix::from_fn(n, f + 1, |i, j| if j < f { x[(i, j)] } else { 1.0 });
        let gram_wide = wide.transpose() * &wide;
        Self { x, wide, gram_wide }
    }

    fn apply_inverse(&self, rhs: &DMatrix<f64>, c: f64) -> Result<DMatrix<f64>> {
        let n = self.x.nrows();
        let f = self.x.ncols();
        if f + 1 < n {
            let mut core = self.gram_wide.clone();
            for j in 0..=f {
                core[(j, j)] += if j < f { 1.0 / c } else { 1.0 };
            }
            let chol = Cholesky::new(core).ok_or(Error::Eigen("ssc system factorization"))?;
            let rw = rhs * &self.wide;
            // R W (D^{-1} + W^T W)^{-1} W^T, solved from the right via transposes.
            let solved = chol.solve(&rw.transpose());
            Ok(rhs - solved.transpose() * self.wide.transpose())
        } else {
            let mut m = self.x * self.x.transpose() * c;
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] += if i == j { 2.0 } else { 1.0 };
                }
            }
            let chol = Cholesky::new(m).ok_or(Error::Eigen("ssc system factorization"))?;
            Ok(chol.solve(&rhs.transpose()).transpose())
        }
    }
}

/// Solves `min ||Z||_1 + mu ||E||_F^2` s.t. `X = Z X + E`, `diag(Z) = 0`,
/// `Z 1 = 1` by an augmented Lagrangian splitting.
///
/// The sparse copy `J` of `Z` receives the soft-threshold step and the zero
/// diagonal projection; `(Z, E)` is then updated jointly in closed form, and
/// multipliers for the reconstruction, coupling and affine constraints follow.
/// The penalty grows geometrically up to `penalty_max`.
///
/// Running out of iterations is not an error: the last iterate is returned
/// with `converged == false`.
pub fn ssc_solve(images: &FeatureMatrix, config: &SscConfig) -> Result<SelfRepresentation> {
    config.validate()?;
    let n = images.n_rows();
    if n < 2 {
        return Err(Error::DimensionMismatch {
            context: "ssc points",
            expected: 2,
            found: n,
        });
    }
    let x = if config.normalize {
        images.unit_rows().into_matrix()
    } else {
        images.matrix().clone()
    };
    let f = x.ncols();
    let x_norm = x.norm().max(f64::MIN_POSITIVE);
    let solver = SystemSolver::new(&x);
    let xt = x.transpose();

    let mut z = DMatrix::<f64>::zeros(n, n);
    let mut j_sparse = DMatrix::<f64>::zeros(n, n);
    let mut e = DMatrix::<f64>::zeros(n, f);
    let mut y_recon = DMatrix::<f64>::zeros(n, f);
    let mut y_couple = DMatrix::<f64>::zeros(n, n);
    let mut y_affine = DVector::<f64>::zeros(n);
    let mut rho = config.penalty_init;
    let mu = config.mu;

    let mut trace = Vec::new();
    let mut residuals = SscResiduals {
        affine: f64::INFINITY,
        reconstruction: f64::INFINITY,
        coupling: f64::INFINITY,
    };
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iters {
        iterations += 1;

        // J: soft threshold of Z + Y2 / rho, zero diagonal.
        for c in 0..n {
            for r in 0..n {
                j_sparse[(r, c)] = if r == c {
                    0.0
                } else {
                    soft_threshold(z[(r, c)] + y_couple[(r, c)] / rho, 1.0 / rho)
                };
            }
        }

        // (Z, E): eliminate E, then solve Z (c X X^T + I + 1 1^T) = c B X^T + C + d 1^T.
        let c = 2.0 * mu / (2.0 * mu + rho);
        let b = &x + &y_recon / rho;
        let mut rhs = (&b * &xt) * c + &j_sparse - &y_couple / rho;
        for r in 0..n {
            let d = 1.0 - y_affine[r] / rho;
            for col in 0..n {
                rhs[(r, col)] += d;
            }
        }
        z = solver.apply_inverse(&rhs, c)?;
        let zx = &z * &x;
        e = (&b - &zx) * (rho / (2.0 * mu + rho));

        // Multipliers.
        let recon_gap = &x - &zx - &e;
        let couple_gap = &z - &j_sparse;
        y_recon += &recon_gap * rho;
        y_couple += &couple_gap * rho;
        for r in 0..n {
            let row_sum: f64 = z.row(r).sum();
            y_affine[r] += rho * (row_sum - 1.0);
        }

        residuals = measure(&x, x_norm, &j_sparse, &e, &couple_gap);
        let obj = j_sparse.iter().map(|v| v.abs()).sum::<f64>() + mu * e.norm_squared();
        trace.push(obj);
        if residuals.affine <= config.tol
            && residuals.reconstruction <= config.tol
            && residuals.coupling <= config.tol
        {
            converged = true;
            break;
        }
        rho = (rho * config.penalty_growth).min(config.penalty_max);
    }

    Ok(SelfRepresentation {
        z: j_sparse,
        e,
        residuals,
        iterations,
        converged,
        objective_trace: trace,
    })
}

fn measure(
    x: &DMatrix<f64>,
    x_norm: f64,
    j_sparse: &DMatrix<f64>,
    e: &DMatrix<f64>,
    couple_gap: &DMatrix<f64>,
) -> SscResiduals {
    let n = j_sparse.nrows();
    let affine = (0..n)
        .map(|r| (j_sparse.row(r).sum() - 1.0).abs())
        .fold(0.0, f64::max);
    let reconstruction = (x - j_sparse * x - e).norm() / x_norm;
    SscResiduals {
        affine,
        reconstruction,
        coupling: couple_gap.amax(),
    }
}

/// Affinity graph `|Z| + |Z^T|`.
pub fn affinity(rep: &SelfRepresentation) -> SimilarityGraph {
    let z = &rep.z;
    let n = z.nrows();
    let weights = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            z[(i, j)].abs() + z[(j, i)].abs()
        }
    });
    SimilarityGraph::new(weights).expect("|Z| + |Z^T| is a valid graph")
}
