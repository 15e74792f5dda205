//! Laplace approximation engine: Newton mode finding and the normalizer /
//! density / marginal-density formulas built on the curvature at the mode.
//!
//! With `ghat = g(theta_hat)` and `H = g''(theta_hat)`, the approximations are
//!
//! ```text
//! log normalizer:  (p/2) log 2pi - 1/2 log det(-H)
//! log f(theta):    1/2 log det(-H) - (p/2) log 2pi + g(theta) - ghat
//! log f(psi):      1/2 log det(-H) - 1/2 log 2pi - 1/2 log det(-H_ll(psi))
//!                  + g(psi, lambda_hat_psi) - ghat
//! ```
//!
//! where `H_ll(psi)` is the nuisance block of the Hessian at the constrained
//! mode with the interest coordinate pinned at `psi`. Normalizing by the value
//! at the mode keeps every exponential bounded regardless of how the model
//! author scaled `g`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, log_det_from_cholesky, symmetrize};
use crate::model::LogTargetModel;

pub const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Convergence when `||grad|| <= tol_grad * (1 + |g|)`.
    pub tol_grad: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iter: 200,
            tol_grad: 1e-10,
        }
    }
}

/// Mode of a log target with the curvature factorization reused by every
/// downstream formula.
#[derive(Debug, Clone)]
pub struct ModeResult {
    pub theta_hat: DVector<f64>,
    pub g_at_mode: f64,
    /// Cholesky of `-g''(theta_hat)` (no jitter: the accepted mode must have
    /// strictly negative-definite curvature).
    pub neg_hess_chol: Cholesky<f64, Dyn>,
    pub log_det_neg_hess: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

impl ModeResult {
    /// Lower-triangular factor `L` with `L L' = -g''(theta_hat)`.
    pub fn neg_hess_l(&self) -> DMatrix<f64> {
        self.neg_hess_chol.l()
    }

    /// Marginal standard deviations `sqrt(diag (-H)^-1)` of the Gaussian fit.
    pub fn fit_sds(&self) -> DVector<f64> {
        let inv = self.neg_hess_chol.inverse();
        inv.diagonal().map(|v| v.sqrt())
    }
}

const ARMIJO_C: f64 = 1e-4;
const ARMIJO_SHRINK: f64 = 0.5;
const ARMIJO_MIN_STEP: f64 = 1e-20;

/// Damped Newton ascent from `init`. The negated Hessian is factorized with an
/// adaptive jitter ladder during iteration; the returned curvature is
/// re-factorized cleanly at the solution.
pub fn find_mode<M: LogTargetModel + ?Sized>(
    model: &M,
    init: &DVector<f64>,
    opts: &NewtonOptions,
) -> Result<ModeResult> {
    let p = model.dim_p();
    if init.len() != p {
        return Err(Error::Invalid(format!(
            "init has dimension {}, model wants {p}",
            init.len()
        )));
    }
    let mut theta = init.clone();
    let mut g = model.eval(&theta);
    if !g.is_finite() {
        return Err(Error::Invalid(
            "initial point outside the target's support".into(),
        ));
    }
    for iter in 0..=opts.max_iter {
        let grad = model.grad(&theta);
        let grad_norm = grad.norm();
        if !grad_norm.is_finite() {
            return Err(Error::NonFiniteEval {
                coord: 0,
                value: grad_norm,
            });
        }
        if grad_norm <= opts.tol_grad * (1.0 + g.abs()) {
            let neg_hess = -symmetrize(&model.hess(&theta));
            let chol = Cholesky::new(neg_hess).ok_or(Error::IndefiniteCurvature { jitter: 0.0 })?;
            let log_det = log_det_from_cholesky(&chol);
            return Ok(ModeResult {
                theta_hat: theta,
                g_at_mode: g,
                neg_hess_chol: chol,
                log_det_neg_hess: log_det,
                grad_norm,
                iterations: iter,
            });
        }
        if iter == opts.max_iter {
            break;
        }
        let neg_hess = -symmetrize(&model.hess(&theta));
        let (chol, _jitter) = cholesky_with_jitter(&neg_hess)?;
        let direction = chol.solve(&grad);
        let slope = grad.dot(&direction); // positive: ascent direction
                                          // once the Armijo improvement drops below the floating-point
                                          // resolution of g, value comparisons stop being informative; take the
                                          // undamped step and let the quadratic endgame finish
        if ARMIJO_C * slope <= 4.0 * f64::EPSILON * (1.0 + g.abs()) {
            let candidate = &theta + &direction;
            let g_candidate = model.eval(&candidate);
            if g_candidate.is_finite() {
                theta = candidate;
                g = g_candidate;
                continue;
            }
        }
        let mut alpha = 1.0;
        loop {
            let candidate = &theta + &direction * alpha;
            let g_candidate = model.eval(&candidate);
            if g_candidate >= g + ARMIJO_C * alpha * slope {
                theta = candidate;
                g = g_candidate;
                break;
            }
            alpha *= ARMIJO_SHRINK;
            if alpha < ARMIJO_MIN_STEP {
                return Err(Error::MaxIterations {
                    iters: iter,
                    residual: grad_norm,
                    tol: opts.tol_grad * (1.0 + g.abs()),
                });
            }
        }
    }
    let grad_norm = model.grad(&theta).norm();
    Err(Error::MaxIterations {
        iters: opts.max_iter,
        residual: grad_norm,
        tol: opts.tol_grad * (1.0 + g.abs()),
    })
}

/// `log integral exp{g(theta) - g(theta_hat)} d theta` under the Gaussian fit.
pub fn laplace_log_normalizer(mode: &ModeResult) -> f64 {
    let p = mode.theta_hat.len() as f64;
    0.5 * p * LN_2PI - 0.5 * mode.log_det_neg_hess
}

/// Normalized Laplace log density at `theta`.
pub fn laplace_log_density<M: LogTargetModel + ?Sized>(
    model: &M,
    mode: &ModeResult,
    theta: &DVector<f64>,
) -> f64 {
    model.eval(theta) - mode.g_at_mode - laplace_log_normalizer(mode)
}

/// View of a model with one coordinate pinned; the remaining coordinates keep
/// their relative order.
struct PinnedView<'a, M: LogTargetModel + ?Sized> {
    model: &'a M,
    interest_index: usize,
    psi: f64,
}

impl<M: LogTargetModel + ?Sized> PinnedView<'_, M> {
    fn embed(&self, lambda: &DVector<f64>) -> DVector<f64> {
        let p = self.model.dim_p();
        let mut theta = DVector::zeros(p);
        let mut k = 0;
        for i in 0..p {
            if i == self.interest_index {
                theta[i] = self.psi;
            } else {
                theta[i] = lambda[k];
                k += 1;
            }
        }
        theta
    }
}

impl<M: LogTargetModel + ?Sized> LogTargetModel for PinnedView<'_, M> {
    fn dim_p(&self) -> usize {
        self.model.dim_p() - 1
    }
    fn sample_n(&self) -> usize {
        self.model.sample_n()
    }
    fn eval(&self, lambda: &DVector<f64>) -> f64 {
        self.model.eval(&self.embed(lambda))
    }
    fn grad(&self, lambda: &DVector<f64>) -> DVector<f64> {
        let full = self.model.grad(&self.embed(lambda));
        full.remove_row(self.interest_index)
    }
    fn hess(&self, lambda: &DVector<f64>) -> DMatrix<f64> {
        let full = self.model.hess(&self.embed(lambda));
        full.remove_row(self.interest_index)
            .remove_column(self.interest_index)
    }
}

/// Constrained mode with the interest coordinate pinned at `psi`.
#[derive(Debug, Clone)]
pub struct ConstrainedModeResult {
    pub interest_index: usize,
    pub psi: f64,
    /// Full parameter vector `(psi, lambda_hat_psi)` in original coordinate order.
    pub theta_hat_psi: DVector<f64>,
    pub g_at_constrained_mode: f64,
    /// `log det` of the negated nuisance Hessian block at the constrained mode.
    pub log_det_neg_hess_nuisance: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

impl ConstrainedModeResult {
    /// The maximizing nuisance coordinates, interest coordinate removed.
    pub fn nuisance_hat(&self) -> DVector<f64> {
        self.theta_hat_psi.clone().remove_row(self.interest_index)
    }
}

/// Maximize over the nuisance block with `theta[interest_index]` pinned at
/// `psi`. `init_nuisance` carries the remaining coordinates in order.
pub fn constrained_mode<M: LogTargetModel + ?Sized>(
    model: &M,
    interest_index: usize,
    psi: f64,
    init_nuisance: &DVector<f64>,
    opts: &NewtonOptions,
) -> Result<ConstrainedModeResult> {
    let p = model.dim_p();
    if interest_index >= p {
        return Err(Error::Invalid(format!(
            "interest index {interest_index} out of range for p = {p}"
        )));
    }
    let view = PinnedView {
        model,
        interest_index,
        psi,
    };
    if p == 1 {
        // no nuisance block: the constrained mode is the pinned point itself
        let theta = DVector::from_element(1, psi);
        let g = model.eval(&theta);
        if !g.is_finite() {
            return Err(Error::Invalid(
                "pinned point outside the target's support".into(),
            ));
        }
        return Ok(ConstrainedModeResult {
            interest_index,
            psi,
            theta_hat_psi: theta,
            g_at_constrained_mode: g,
            log_det_neg_hess_nuisance: 0.0,
            grad_norm: 0.0,
            iterations: 0,
        });
    }
    let inner = find_mode(&view, init_nuisance, opts)?;
    Ok(ConstrainedModeResult {
        interest_index,
        psi,
        theta_hat_psi: view.embed(&inner.theta_hat),
        g_at_constrained_mode: inner.g_at_mode,
        log_det_neg_hess_nuisance: inner.log_det_neg_hess,
        grad_norm: inner.grad_norm,
        iterations: inner.iterations,
    })
}

/// Marginal Laplace log density of the interest coordinate at `psi`, given the
/// joint mode. The nuisance profile is re-solved from the joint mode's
/// nuisance block.
pub fn marginal_laplace_log_density<M: LogTargetModel + ?Sized>(
    model: &M,
    interest_index: usize,
    psi: f64,
    mode: &ModeResult,
    opts: &NewtonOptions,
) -> Result<f64> {
    let init = mode.theta_hat.clone().remove_row(interest_index);
    let constrained = constrained_mode(model, interest_index, psi, &init, opts)?;
    Ok(marginal_laplace_from_parts(mode, &constrained))
}

/// The marginal formula given both solved pieces; exposed so grids over `psi`
/// can reuse constrained solves.
pub fn marginal_laplace_from_parts(mode: &ModeResult, constrained: &ConstrainedModeResult) -> f64 {
    0.5 * mode.log_det_neg_hess - 0.5 * LN_2PI - 0.5 * constrained.log_det_neg_hess_nuisance
        + constrained.g_at_constrained_mode
        - mode.g_at_mode
}
