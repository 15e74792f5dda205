//! Model contracts consumed by every engine in this crate.
//!
//! A [`LogTargetModel`] exposes an unnormalized log target `g(theta)` — typically
//! log prior + log likelihood, scaled however the author likes since additive
//! constants cancel from every density ratio — together with its first two
//! derivatives. Third/fourth directional slices are optional and only consumed
//! by the assumption audit. A [`CumulantModel`] exposes a cumulant generating
//! function `K(t)` with gradient, Hessian and an explicit domain indicator;
//! `K` is convex on its domain, so `K''` must be positive definite there.
//!
//! Derivative defaults fall back to central finite differences with step
//! `cbrt(machine eps) * (1 + |theta_i|)` per coordinate. Implementations must be
//! pure and re-entrant (`Sync`): engines and oracles evaluate them from
//! multiple threads.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Unnormalized log target with derivatives.
pub trait LogTargetModel: Sync {
    /// Parameter dimension p.
    fn dim_p(&self) -> usize;
    /// Nominal sample size n (drives the asymptotic-regime diagnostics; use 1
    /// for targets without a data interpretation).
    fn sample_n(&self) -> usize;

    /// `g(theta)`; may return -inf outside the target's support.
    fn eval(&self, theta: &DVector<f64>) -> f64;

    /// Gradient of `g`. Default: central finite differences of [`Self::eval`].
    fn grad(&self, theta: &DVector<f64>) -> DVector<f64> {
        fd_gradient_of(&|t| self.eval(t), theta, None)
            .expect("finite-difference gradient hit a non-finite evaluation")
    }

    /// Hessian of `g`. Default: central finite differences of [`Self::grad`].
    /// Consumers symmetrize before factorizing either way.
    fn hess(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        fd_jacobian_of(&|t| self.grad(t), theta)
    }

    /// Matrix slice `g3[., ., l]` of third derivatives, if available analytically.
    fn third_slice(&self, _theta: &DVector<f64>, _l: usize) -> Option<DMatrix<f64>> {
        None
    }

    /// Matrix slice `g4[., ., l, m]` of fourth derivatives, if available analytically.
    fn fourth_slice(&self, _theta: &DVector<f64>, _l: usize, _m: usize) -> Option<DMatrix<f64>> {
        None
    }
}

/// Cumulant generating function of a p-dimensional sufficient statistic.
pub trait CumulantModel: Sync {
    fn dim_p(&self) -> usize;
    /// Sample size backing the statistic (1 when not meaningful).
    fn sample_n(&self) -> usize;

    /// `K(t)`; callers must keep `t` inside [`Self::in_domain`].
    fn k_eval(&self, t: &DVector<f64>) -> f64;
    /// `K'(t)`, the mean of the exponentially tilted statistic.
    fn k_grad(&self, t: &DVector<f64>) -> DVector<f64>;
    /// `K''(t)`, positive definite on the domain.
    fn k_hess(&self, t: &DVector<f64>) -> DMatrix<f64>;
    /// Whether `t` lies in the interior of the CGF domain. `K(0) = 0` and the
    /// origin is always inside.
    fn in_domain(&self, t: &DVector<f64>) -> bool;
}

pub fn fd_step(theta_i: f64) -> f64 {
    // cube-root of machine epsilon balances truncation vs cancellation for
    // central differences
    f64::EPSILON.cbrt() * (1.0 + theta_i.abs())
}

/// Central finite-difference gradient of a scalar function. Reports the
/// offending coordinate if a probe evaluation is non-finite.
pub fn fd_gradient_of(
    f: &(dyn Fn(&DVector<f64>) -> f64 + '_),
    theta: &DVector<f64>,
    step: Option<f64>,
) -> Result<DVector<f64>> {
    let p = theta.len();
    let mut grad = DVector::zeros(p);
    for i in 0..p {
        let h = step.unwrap_or_else(|| fd_step(theta[i]));
        let mut plus = theta.clone();
        plus[i] += h;
        let mut minus = theta.clone();
        minus[i] -= h;
        let (fp, fm) = (f(&plus), f(&minus));
        if !fp.is_finite() {
            return Err(Error::NonFiniteEval {
                coord: i,
                value: fp,
            });
        }
        if !fm.is_finite() {
            return Err(Error::NonFiniteEval {
                coord: i,
                value: fm,
            });
        }
        grad[i] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}

/// Central finite-difference gradient of a model's log target.
pub fn fd_gradient<M: LogTargetModel + ?Sized>(
    model: &M,
    theta: &DVector<f64>,
    step: Option<f64>,
) -> Result<DVector<f64>> {
    fd_gradient_of(&|t| model.eval(t), theta, step)
}

/// Central finite-difference Jacobian of a vector function, symmetrized
/// (used for Hessians obtained by differencing a gradient).
pub fn fd_jacobian_of(
    f: &(dyn Fn(&DVector<f64>) -> DVector<f64> + '_),
    theta: &DVector<f64>,
) -> DMatrix<f64> {
    let p = theta.len();
    let mut jac = DMatrix::zeros(p, p);
    for i in 0..p {
        let h = fd_step(theta[i]);
        let mut plus = theta.clone();
        plus[i] += h;
        let mut minus = theta.clone();
        minus[i] -= h;
        let col = (f(&plus) - f(&minus)) / (2.0 * h);
        jac.set_column(i, &col);
    }
    0.5 * (&jac + jac.transpose())
}

/// Outcome of a derivative consistency check at a batch of points.
#[derive(Debug, Clone)]
pub struct DerivativeCheck {
    /// Worst relative gap `|fd - analytic| / (1 + |analytic|)` over the gradient entries.
    pub grad_max_rel: f64,
    /// Same measure for the Hessian against differenced analytic gradients.
    pub hess_max_rel: f64,
    pub tol_grad: f64,
    pub tol_hess: f64,
    pub points_checked: usize,
}

impl DerivativeCheck {
    pub fn pass(&self) -> bool {
        self.grad_max_rel <= self.tol_grad && self.hess_max_rel <= self.tol_hess
    }
}

pub const DERIV_CHECK_TOL_GRAD: f64 = 1e-4;
pub const DERIV_CHECK_TOL_HESS: f64 = 1e-3;

fn max_rel_gap(approx: &DVector<f64>, exact: &DVector<f64>) -> f64 {
    approx
        .iter()
        .zip(exact.iter())
        .map(|(a, e)| (a - e).abs() / (1.0 + e.abs()))
        .fold(0.0, f64::max)
}

/// Compare a model's `grad` against finite differences of `eval`, and `hess`
/// against finite differences of `grad`, over the supplied points.
pub fn verify_derivatives<M: LogTargetModel + ?Sized>(
    model: &M,
    points: &[DVector<f64>],
) -> Result<DerivativeCheck> {
    let mut grad_max = 0.0f64;
    let mut hess_max = 0.0f64;
    for theta in points {
        let analytic = model.grad(theta);
        let fd = fd_gradient(model, theta, None)?;
        grad_max = grad_max.max(max_rel_gap(&fd, &analytic));

        let analytic_h = model.hess(theta);
        let fd_h = fd_jacobian_of(&|t| model.grad(t), theta);
        let fd_flat = DVector::from_iterator(theta.len() * theta.len(), fd_h.iter().cloned());
        let an_flat = DVector::from_iterator(theta.len() * theta.len(), analytic_h.iter().cloned());
        hess_max = hess_max.max(max_rel_gap(&fd_flat, &an_flat));
    }
    Ok(DerivativeCheck {
        grad_max_rel: grad_max,
        hess_max_rel: hess_max,
        tol_grad: DERIV_CHECK_TOL_GRAD,
        tol_hess: DERIV_CHECK_TOL_HESS,
        points_checked: points.len(),
    })
}

/// Same consistency check for a cumulant model: `k_grad` against differenced
/// `k_eval`, `k_hess` against differenced `k_grad`.
pub fn verify_cumulant_derivatives<C: CumulantModel + ?Sized>(
    cgf: &C,
    points: &[DVector<f64>],
) -> Result<DerivativeCheck> {
    let mut grad_max = 0.0f64;
    let mut hess_max = 0.0f64;
    for t in points {
        if !cgf.in_domain(t) {
            return Err(Error::Invalid(format!(
                "check point outside CGF domain: {t:?}"
            )));
        }
        let analytic = cgf.k_grad(t);
        let fd = fd_gradient_of(&|u| cgf.k_eval(u), t, None)?;
        grad_max = grad_max.max(max_rel_gap(&fd, &analytic));

        let analytic_h = cgf.k_hess(t);
        let fd_h = fd_jacobian_of(&|u| cgf.k_grad(u), t);
        let fd_flat = DVector::from_iterator(t.len() * t.len(), fd_h.iter().cloned());
        let an_flat = DVector::from_iterator(t.len() * t.len(), analytic_h.iter().cloned());
        hess_max = hess_max.max(max_rel_gap(&fd_flat, &an_flat));
    }
    Ok(DerivativeCheck {
        grad_max_rel: grad_max,
        hess_max_rel: hess_max,
        tol_grad: DERIV_CHECK_TOL_GRAD,
        tol_hess: DERIV_CHECK_TOL_HESS,
        points_checked: points.len(),
    })
}
