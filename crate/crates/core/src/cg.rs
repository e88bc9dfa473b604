//! Matrix-free conjugate gradient over matrix-shaped unknowns.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Outcome of a conjugate gradient solve.
#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: DMatrix<f64>,
    pub iterations: usize,
    /// Final residual norm relative to the right-hand side.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Solves `A x = b` for a symmetric positive (semi)definite operator `A`.
///
/// The unknown is matrix-shaped; inner products are Frobenius. Iteration
/// starts from `x0` and stops once `||b - A x|| <= tol ||b||` or after
/// `max_iters` steps. A zero right-hand side returns the zero matrix, which is
/// a minimizer of the associated quadratic for any PSD operator.
pub fn conjugate_gradient<F>(
    mut apply: F,
    b: &DMatrix<f64>,
    x0: DMatrix<f64>,
    max_iters: usize,
    tol: f64,
) -> Result<CgOutcome>
where
    F: FnMut(&DMatrix<f64>) -> DMatrix<f64>,
{
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            solution: DMatrix::zeros(b.nrows(), b.ncols()),
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        });
    }
    let mut x = x0;
    let mut r = b - apply(&x);
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    let threshold = tol * b_norm;
    let mut iterations = 0;
    while iterations < max_iters && libm::sqrt(rr) > threshold {
        let ap = apply(&p);
        let curvature = p.dot(&ap);
        if !(curvature > 0.0) {
            return Err(Error::CgBreakdown { curvature });
        }
        let alpha = rr / curvature;
        x += &p * alpha;
        r -= &ap * alpha;
        let rr_next = r.norm_squared();
        let beta = rr_next / rr;
        rr = rr_next;
        p = &r + &p * beta;
        iterations += 1;
    }
    let relative_residual = libm::sqrt(rr) / b_norm;
    Ok(CgOutcome {
        solution: x,
        iterations,
        relative_residual,
        converged: libm::sqrt(rr) <= threshold,
    })
}
