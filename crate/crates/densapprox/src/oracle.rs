//! Reference values to compare approximations against: adaptive quadrature of
//! the unnormalized target (low dimension only), self-normalized importance
//! sampling from a Gaussian proposal centered at the mode, and closed-form
//! densities where they exist.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::laplace::{ModeResult, LN_2PI};
use crate::model::LogTargetModel;
use crate::quad::{integrate, integrate_box, QuadOptions, QuadResult};

/// Default half-width of the quadrature box, in marginal standard deviations
/// of the Gaussian fit at the mode.
pub const DEFAULT_HALF_WIDTH_SDS: f64 = 12.0;

/// Importance-sampling runs with fewer effective draws than this are refused.
pub const MIN_EFFECTIVE_SAMPLE_SIZE: f64 = 50.0;

/// Default standard-deviation inflation of the importance proposal relative
/// to the Gaussian fit at the mode.
pub const DEFAULT_PROPOSAL_SCALE: f64 = 1.2;

#[derive(Debug, Clone)]
pub struct OracleEstimate {
    /// Log of the target quantity (normalizer or density).
    pub value: f64,
    /// Standard error of `value`; zero for exact references.
    pub std_error: f64,
    pub method: &'static str,
    /// Number of integrand evaluations or Monte Carlo draws spent.
    pub cost: u64,
}

impl OracleEstimate {
    pub fn exact(value: f64) -> Self {
        OracleEstimate {
            value,
            std_error: 0.0,
            method: "closed-form",
            cost: 0,
        }
    }
}

/// Mode-shifted log normalizer `ln integral exp(g - g(mode))` by adaptive
/// quadrature over the box `mode +/- half_width_sds` marginal standard
/// deviations. Add `g_at_mode` to recover the unshifted value. Dimensions
/// above three are refused; use importance sampling there.
pub fn quadrature_log_normalizer(
    model: &dyn LogTargetModel,
    mode: &ModeResult,
    half_width_sds: f64,
    opts: &QuadOptions,
) -> Result<OracleEstimate> {
    let p = model.dim_p();
    if !(half_width_sds > 0.0) {
        return Err(Error::Invalid("half width must be positive".into()));
    }
    let sds = mode.fit_sds();
    let g_hat = mode.g_at_mode;
    let result: QuadResult = if p == 1 {
        let center = mode.theta_hat[0];
        let h = half_width_sds * sds[0];
        let f = |x: f64| {
            let v = model.eval(&DVector::from_vec(vec![x]));
            (v - g_hat).exp()
        };
        integrate(&f, center - h, center + h, opts)?
    } else {
        let lo = DVector::from_fn(p, |i, _| mode.theta_hat[i] - half_width_sds * sds[i]);
        let hi = DVector::from_fn(p, |i, _| mode.theta_hat[i] + half_width_sds * sds[i]);
        let f = |theta: &DVector<f64>| (model.eval(theta) - g_hat).exp();
        integrate_box(&f, &lo, &hi, opts)?
    };
    if !(result.value > 0.0) {
        return Err(Error::Invalid("quadrature mass is not positive".into()));
    }
    Ok(OracleEstimate {
        value: result.value.ln(),
        std_error: result.abs_error / result.value,
        method: "quadrature",
        cost: result.evals as u64,
    })
}

/// Mode-shifted log normalizer `ln integral exp(g - g(mode))` by importance
/// sampling from `N(mode, scale^2 (-H)^{-1})`.
///
/// Draws are `theta = mode + scale * L^{-T} z` with `-H = L L^T` and standard
/// normal `z`; the estimate is the log mean weight with a delta-method
/// standard error. Runs whose effective sample size `(sum w)^2 / sum w^2`
/// falls below [`MIN_EFFECTIVE_SAMPLE_SIZE`] return
/// [`Error::DegenerateWeights`].
pub fn importance_log_normalizer(
    model: &dyn LogTargetModel,
    mode: &ModeResult,
    draws: usize,
    scale: f64,
    seed: u64,
) -> Result<OracleEstimate> {
    let p = model.dim_p();
    if draws < 2 {
        return Err(Error::Invalid("need at least two draws".into()));
    }
    if !(scale > 0.0) {
        return Err(Error::Invalid("proposal scale must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = mode.neg_hess_l();
    // log proposal density at mode + scale L^{-T} z
    let log_q_const =
        -0.5 * p as f64 * LN_2PI - p as f64 * scale.ln() + 0.5 * mode.log_det_neg_hess;
    let mut log_w = Vec::with_capacity(draws);
    for _ in 0..draws {
        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let step = l
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::Invalid("proposal Cholesky factor is singular".into()))?;
        let theta = &mode.theta_hat + scale * step;
        let g = model.eval(&theta);
        let log_q = log_q_const - 0.5 * z.norm_squared();
        log_w.push(g - mode.g_at_mode - log_q);
    }
    let m = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::DegenerateWeights {
            ess: 0.0,
            min_ess: MIN_EFFECTIVE_SAMPLE_SIZE,
        });
    }
    let a: Vec<f64> = log_w.iter().map(|&lw| (lw - m).exp()).collect();
    let sum: f64 = a.iter().sum();
    let sum_sq: f64 = a.iter().map(|&v| v * v).sum();
    let ess = sum * sum / sum_sq;
    if ess < MIN_EFFECTIVE_SAMPLE_SIZE {
        return Err(Error::DegenerateWeights {
            ess,
            min_ess: MIN_EFFECTIVE_SAMPLE_SIZE,
        });
    }
    let n = draws as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean) * n / (n - 1.0);
    // delta method: sd(log Z-hat) = sd(Z-hat) / Z-hat
    let std_error = (var / n).sqrt() / mean;
    Ok(OracleEstimate {
        value: m + mean.ln(),
        std_error,
        method: "importance-sampling",
        cost: draws as u64,
    })
}

/// Importance-sampling estimate of the fraction of normalizer mass lying
/// outside the ball of the given radius around the mode. A proxy for the
/// far-region tail mass, which has no direct finite-sample measurement.
pub fn importance_tail_mass(
    model: &dyn LogTargetModel,
    mode: &ModeResult,
    radius: f64,
    draws: usize,
    scale: f64,
    seed: u64,
) -> Result<f64> {
    let p = model.dim_p();
    if !(radius > 0.0) {
        return Err(Error::Invalid("ball radius must be positive".into()));
    }
    if draws < 2 {
        return Err(Error::Invalid("need at least two draws".into()));
    }
    if !(scale > 0.0) {
        return Err(Error::Invalid("proposal scale must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = mode.neg_hess_l();
    let mut log_w = Vec::with_capacity(draws);
    let mut outside = Vec::with_capacity(draws);
    for _ in 0..draws {
        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let step = l
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::Invalid("proposal Cholesky factor is singular".into()))?;
        let offset = scale * step;
        let theta = &mode.theta_hat + &offset;
        let g = model.eval(&theta);
        // the constant parts of log q cancel in the mass ratio
        log_w.push(g + 0.5 * z.norm_squared());
        outside.push(offset.norm() > radius);
    }
    let m = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::DegenerateWeights {
            ess: 0.0,
            min_ess: MIN_EFFECTIVE_SAMPLE_SIZE,
        });
    }
    let mut total = 0.0;
    let mut total_outside = 0.0;
    let mut sum_sq = 0.0;
    for (lw, out) in log_w.iter().zip(outside.iter()) {
        let a = (lw - m).exp();
        total += a;
        sum_sq += a * a;
        if *out {
            total_outside += a;
        }
    }
    let ess = total * total / sum_sq;
    if ess < MIN_EFFECTIVE_SAMPLE_SIZE {
        return Err(Error::DegenerateWeights {
            ess,
            min_ess: MIN_EFFECTIVE_SAMPLE_SIZE,
        });
    }
    Ok(total_outside / total)
}

/// Densities known in closed form, used to score approximations exactly.
#[derive(Debug, Clone, Copy)]
pub enum ClosedForm {
    /// Gamma with unit rate.
    Gamma {
        shape: f64,
    },
    Normal {
        mean: f64,
        variance: f64,
    },
    /// First of two exponential group sums given the total, `m` observations
    /// per group: a Beta(m, m) scaled by the total.
    ExpMeansConditional {
        m: usize,
        total: f64,
    },
}

impl ClosedForm {
    pub fn log_density(&self, x: f64) -> Result<f64> {
        match *self {
            ClosedForm::Gamma { shape } => {
                if !(shape > 0.0) {
                    return Err(Error::Invalid("shape must be positive".into()));
                }
                if !(x > 0.0) {
                    return Err(Error::OutOfSupport(format!(
                        "gamma support is positive reals, got {x}"
                    )));
                }
                Ok((shape - 1.0) * x.ln() - x - ln_gamma(shape))
            }
            ClosedForm::Normal { mean, variance } => {
                if !(variance > 0.0) {
                    return Err(Error::Invalid("variance must be positive".into()));
                }
                Ok(-0.5 * (LN_2PI + variance.ln()) - (x - mean) * (x - mean) / (2.0 * variance))
            }
            ClosedForm::ExpMeansConditional { m, total } => {
                if m == 0 {
                    return Err(Error::Invalid(
                        "need at least one observation per group".into(),
                    ));
                }
                if !(total > 0.0) {
                    return Err(Error::OutOfSupport("total must be positive".into()));
                }
                if !(x > 0.0 && x < total) {
                    return Err(Error::OutOfSupport(format!(
                        "conditional support is (0, {total}), got {x}"
                    )));
                }
                let mf = m as f64;
                Ok(ln_gamma(2.0 * mf) - 2.0 * ln_gamma(mf)
                    + (mf - 1.0) * (x.ln() + (total - x).ln())
                    - (2.0 * mf - 1.0) * total.ln())
            }
        }
    }
}
