//! Canonical-link generalized linear models (dispersion 1) with optional
//! Gaussian prior, plus the mixed mean parametrization that makes the interest
//! coefficient orthogonal to the nuisance block in linear exponential
//! families.
//!
//! With cumulant function `b` and `eta = X beta`,
//! `g(beta) = sum_j [y_j eta_j - b(eta_j)] - |beta|^2 / (2 prior_sd^2)`;
//! `prior_sd = inf` drops the prior, leaving the pure likelihood.
//!
//! The mixed parametrization keeps the first (interest) coordinate canonical
//! and replaces the nuisance coordinates by the scaled sufficient-statistic
//! means `lambda_k(beta) = E_beta[sum_j y_j x_jk] / n = sum_j b'(eta_j) x_jk / n`
//! (the division by n keeps the nuisance coordinates bounded as n grows). At a
//! constrained likelihood maximum the nuisance score pins these means at their
//! observed values, so the profile nuisance is constant in the interest value
//! and the mixed Hessian's cross block vanishes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::model::LogTargetModel;
use crate::models::logistic::{log1pexp, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlmFamily {
    /// `b(z) = e^z`; y is a count.
    Poisson,
    /// `b(z) = -ln(-z)` on `z < 0`; y is a positive waiting time with rate `-z`.
    Exponential,
    /// `b(z) = ln(1 + e^z)`; y is 0/1.
    Logistic,
}

impl GlmFamily {
    pub fn name(&self) -> &'static str {
        match self {
            GlmFamily::Poisson => "poisson",
            GlmFamily::Exponential => "exponential",
            GlmFamily::Logistic => "logistic",
        }
    }

    pub fn in_domain(&self, z: f64) -> bool {
        match self {
            GlmFamily::Exponential => z < 0.0,
            _ => true,
        }
    }

    pub fn cumulant(&self, z: f64) -> f64 {
        match self {
            GlmFamily::Poisson => z.exp(),
            GlmFamily::Exponential => -(-z).ln(),
            GlmFamily::Logistic => log1pexp(z),
        }
    }

    /// `b'`: the mean function.
    pub fn mean(&self, z: f64) -> f64 {
        match self {
            GlmFamily::Poisson => z.exp(),
            GlmFamily::Exponential => -1.0 / z,
            GlmFamily::Logistic => sigmoid(z),
        }
    }

    /// `b''`: the variance function.
    pub fn variance(&self, z: f64) -> f64 {
        match self {
            GlmFamily::Poisson => z.exp(),
            GlmFamily::Exponential => 1.0 / (z * z),
            GlmFamily::Logistic => {
                let p = sigmoid(z);
                p * (1.0 - p)
            }
        }
    }

    pub fn third(&self, z: f64) -> f64 {
        match self {
            GlmFamily::Poisson => z.exp(),
            GlmFamily::Exponential => -2.0 / (z * z * z),
            GlmFamily::Logistic => {
                let p = sigmoid(z);
                p * (1.0 - p) * (1.0 - 2.0 * p)
            }
        }
    }

    pub fn fourth(&self, z: f64) -> f64 {
        match self {
            GlmFamily::Poisson => z.exp(),
            GlmFamily::Exponential => 6.0 / (z * z * z * z),
            GlmFamily::Logistic => {
                let p = sigmoid(z);
                p * (1.0 - p) * (1.0 - 6.0 * p + 6.0 * p * p)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlmModel {
    x: DMatrix<f64>,
    y: DVector<f64>,
    family: GlmFamily,
    /// `f64::INFINITY` means no prior (pure likelihood target).
    prior_sd: f64,
}

impl GlmModel {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, family: GlmFamily, prior_sd: f64) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Invalid("design rows and responses disagree".into()));
        }
        if !(prior_sd > 0.0) {
            return Err(Error::Invalid(format!(
                "prior sd must be positive (inf allowed), got {prior_sd}"
            )));
        }
        Ok(GlmModel {
            x,
            y,
            family,
            prior_sd,
        })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn family(&self) -> GlmFamily {
        self.family
    }

    fn prior_precision(&self) -> f64 {
        if self.prior_sd.is_finite() {
            1.0 / (self.prior_sd * self.prior_sd)
        } else {
            0.0
        }
    }

    fn eta(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.x * beta
    }

    fn weighted_neg_gram(&self, w: &DVector<f64>, prior_prec: f64) -> DMatrix<f64> {
        let mut scaled = self.x.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let mut out = -(self.x.transpose() * scaled);
        if prior_prec > 0.0 {
            for i in 0..self.x.ncols() {
                out[(i, i)] -= prior_prec;
            }
        }
        out
    }

    /// Scaled mean of the sufficient statistic, `E_beta[X'y] / n`.
    pub fn statistic_mean(&self, beta: &DVector<f64>) -> DVector<f64> {
        let eta = self.eta(beta);
        let mu = eta.map(|z| self.family.mean(z));
        self.x.transpose() * mu / self.x.nrows() as f64
    }
}

impl LogTargetModel for GlmModel {
    fn dim_p(&self) -> usize {
        self.x.ncols()
    }
    fn sample_n(&self) -> usize {
        self.x.nrows()
    }

    fn eval(&self, beta: &DVector<f64>) -> f64 {
        let eta = self.eta(beta);
        if eta.iter().any(|&z| !self.family.in_domain(z)) {
            return f64::NEG_INFINITY;
        }
        let loglik: f64 = eta
            .iter()
            .zip(self.y.iter())
            .map(|(&z, &y)| y * z - self.family.cumulant(z))
            .sum();
        loglik - 0.5 * self.prior_precision() * beta.dot(beta)
    }

    fn grad(&self, beta: &DVector<f64>) -> DVector<f64> {
        let eta = self.eta(beta);
        let resid = DVector::from_fn(eta.len(), |i, _| self.y[i] - self.family.mean(eta[i]));
        self.x.transpose() * resid - beta * self.prior_precision()
    }

    fn hess(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let eta = self.eta(beta);
        let w = eta.map(|z| self.family.variance(z));
        self.weighted_neg_gram(&w, self.prior_precision())
    }

    fn third_slice(&self, beta: &DVector<f64>, l: usize) -> Option<DMatrix<f64>> {
        let eta = self.eta(beta);
        let w = DVector::from_fn(eta.len(), |i, _| self.family.third(eta[i]) * self.x[(i, l)]);
        Some(self.weighted_neg_gram(&w, 0.0))
    }

    fn fourth_slice(&self, beta: &DVector<f64>, l: usize, m: usize) -> Option<DMatrix<f64>> {
        let eta = self.eta(beta);
        let w = DVector::from_fn(eta.len(), |i, _| {
            self.family.fourth(eta[i]) * self.x[(i, l)] * self.x[(i, m)]
        });
        Some(self.weighted_neg_gram(&w, 0.0))
    }
}

/// Draw a GLM dataset under `beta0` with i.i.d. standard-normal design
/// entries. Exponential-family rows are redrawn until the linear predictor is
/// in the natural domain; the redraw count is returned alongside.
pub fn simulate_glm(
    family: GlmFamily,
    n: usize,
    p: usize,
    beta0: &DVector<f64>,
    seed: u64,
) -> Result<(GlmModel, usize)> {
    if beta0.len() != p {
        return Err(Error::Invalid("beta0 dimension must match p".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    let mut rejections = 0usize;
    for i in 0..n {
        let (row, z) = loop {
            let row = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let z = beta0.dot(&row);
            if family.in_domain(z) {
                break (row, z);
            }
            rejections += 1;
        };
        x.set_row(i, &row.transpose());
        y[i] = match family {
            GlmFamily::Poisson => {
                let lambda = z.exp();
                rng.sample(
                    Poisson::new(lambda)
                        .map_err(|e| Error::Invalid(format!("poisson rate: {e}")))?,
                )
            }
            GlmFamily::Exponential => {
                // inverse-CDF draw with rate -z
                let u: f64 = rng.random();
                -(1.0 - u).ln() / (-z)
            }
            GlmFamily::Logistic => {
                if rng.random::<f64>() < sigmoid(z) {
                    1.0
                } else {
                    0.0
                }
            }
        };
    }
    Ok((GlmModel::new(x, y, family, f64::INFINITY)?, rejections))
}

const MEAN_MAP_MAX_ITER: usize = 100;
const MEAN_MAP_TOL: f64 = 1e-12;

/// Map a canonical coefficient vector to the mixed parametrization
/// `(beta_0, lambda_1 .. lambda_{p-1})` with nuisance mean coordinates.
pub fn to_mean_parametrization(glm: &GlmModel, beta: &DVector<f64>) -> DVector<f64> {
    let p = beta.len();
    let means = glm.statistic_mean(beta);
    let mut out = DVector::zeros(p);
    out[0] = beta[0];
    for k in 1..p {
        out[k] = means[k];
    }
    out
}

/// Invert the mixed parametrization by Newton iteration on the nuisance block.
/// `init` seeds the canonical nuisance coordinates (zeros when `None`).
pub fn from_mean_parametrization(
    glm: &GlmModel,
    mixed: &DVector<f64>,
    init: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let p = glm.dim_p();
    if mixed.len() != p {
        return Err(Error::Invalid("mixed point dimension must match p".into()));
    }
    let n = glm.sample_n() as f64;
    let mut beta = DVector::zeros(p);
    beta[0] = mixed[0];
    if let Some(init) = init {
        beta.rows_mut(1, p - 1).copy_from(init);
    }
    let target = mixed.rows(1, p - 1).into_owned();
    let residual = |b: &DVector<f64>| -> Result<DVector<f64>> {
        let eta = glm.eta(b);
        if eta.iter().any(|&z| !glm.family.in_domain(z)) {
            return Err(Error::InverseMapDiverged {
                iters: 0,
                residual: f64::INFINITY,
            });
        }
        Ok(glm.statistic_mean(b).rows(1, p - 1).into_owned() - &target)
    };
    let mut r = residual(&beta)?;
    let mut r_norm = r.norm();
    for iter in 0..MEAN_MAP_MAX_ITER {
        if r_norm <= MEAN_MAP_TOL * (1.0 + target.norm()) {
            return Ok(beta);
        }
        // Jacobian of the nuisance means wrt the nuisance coefficients:
        // (1/n) [X' W X] restricted to nuisance rows/columns
        let eta = glm.eta(&beta);
        let w = eta.map(|z| glm.family.variance(z));
        let mut scaled = glm.x.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let gram = (glm.x.transpose() * scaled) / n;
        let jac = gram.view((1, 1), (p - 1, p - 1)).into_owned();
        let step = jac.lu().solve(&r).ok_or(Error::InverseMapDiverged {
            iters: iter,
            residual: r_norm,
        })?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut candidate = beta.clone();
            {
                let mut nuis = candidate.rows_mut(1, p - 1);
                nuis -= &step * alpha;
            }
            if let Ok(cand_r) = residual(&candidate) {
                let cand_norm = cand_r.norm();
                if cand_norm < r_norm {
                    beta = candidate;
                    r = cand_r;
                    r_norm = cand_norm;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::InverseMapDiverged {
                iters: iter,
                residual: r_norm,
            });
        }
    }
    Err(Error::InverseMapDiverged {
        iters: MEAN_MAP_MAX_ITER,
        residual: r_norm,
    })
}

/// The GLM target expressed in the mixed parametrization (interest coordinate
/// canonical, nuisance coordinates on the mean scale). The gradient is exact
/// (chain rule through the inverse map); the Hessian falls back to finite
/// differences of the gradient.
///
/// `anchor` must be a canonical coefficient vector with every linear predictor
/// strictly inside the family domain; its nuisance block seeds the inverse-map
/// Newton solves (families with a restricted domain cannot start from zero).
pub struct MeanParametrizedGlm<'a> {
    glm: &'a GlmModel,
    anchor: DVector<f64>,
}

impl<'a> MeanParametrizedGlm<'a> {
    pub fn new(glm: &'a GlmModel, anchor: DVector<f64>) -> Result<Self> {
        let eta = glm.eta(&anchor);
        if eta.iter().any(|&z| !glm.family.in_domain(z)) {
            return Err(Error::Invalid(
                "anchor point outside the family domain".into(),
            ));
        }
        Ok(MeanParametrizedGlm { glm, anchor })
    }

    fn anchor_nuisance(&self) -> DVector<f64> {
        self.anchor.rows(1, self.anchor.len() - 1).into_owned()
    }

    fn forward_jacobian(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        // d(mixed)/d(beta): first row is e_0', nuisance rows are rows 1.. of (X' W X)/n
        let p = self.glm.dim_p();
        let n = self.glm.sample_n() as f64;
        let eta = self.glm.eta(beta);
        let w = eta.map(|z| self.glm.family.variance(z));
        let mut scaled = self.glm.x.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let gram = (self.glm.x.transpose() * scaled) / n;
        let mut jac = DMatrix::zeros(p, p);
        jac[(0, 0)] = 1.0;
        for k in 1..p {
            for j in 0..p {
                jac[(k, j)] = gram[(k, j)];
            }
        }
        jac
    }
}

impl LogTargetModel for MeanParametrizedGlm<'_> {
    fn dim_p(&self) -> usize {
        self.glm.dim_p()
    }
    fn sample_n(&self) -> usize {
        self.glm.sample_n()
    }

    fn eval(&self, mixed: &DVector<f64>) -> f64 {
        match from_mean_parametrization(self.glm, mixed, Some(&self.anchor_nuisance())) {
            Ok(beta) => self.glm.eval(&beta),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    fn grad(&self, mixed: &DVector<f64>) -> DVector<f64> {
        let beta = from_mean_parametrization(self.glm, mixed, Some(&self.anchor_nuisance()))
            .expect("mixed point outside the image of the mean parametrization");
        let chain = self
            .forward_jacobian(&beta)
            .transpose()
            .lu()
            .solve(&self.glm.grad(&beta))
            .expect("forward Jacobian is invertible at interior points");
        chain
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::{constrained_mode, NewtonOptions};
    use crate::model::verify_derivatives;
    use approx::assert_relative_eq;

    #[test]
    fn poisson_derivatives_consistent() {
        let (m, _) = simulate_glm(
            GlmFamily::Poisson,
            30,
            2,
            &DVector::from_vec(vec![0.4, -0.2]),
            3,
        )
        .unwrap();
        let pts: Vec<_> = (0..3)
            .map(|k| DVector::from_fn(2, |i, _| 0.15 * k as f64 - 0.1 * i as f64))
            .collect();
        assert!(verify_derivatives(&m, &pts).unwrap().pass());
    }

    #[test]
    fn exponential_domain_is_enforced() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let y = DVector::from_vec(vec![0.5, 2.0]);
        let m = GlmModel::new(x, y, GlmFamily::Exponential, f64::INFINITY).unwrap();
        assert!(m.eval(&DVector::from_element(1, 0.5)).is_infinite());
        assert!(m.eval(&DVector::from_element(1, -0.5)).is_finite());
    }

    #[test]
    fn poisson_single_sample_mean_is_exp_theta() {
        // one observation, design = [1]: statistic mean must equal b'(theta)
        let x = DMatrix::from_element(1, 1, 1.0);
        let y = DVector::from_element(1, 2.0);
        let m = GlmModel::new(x, y, GlmFamily::Poisson, f64::INFINITY).unwrap();
        let theta = DVector::from_element(1, 0.7);
        assert_relative_eq!(m.statistic_mean(&theta)[0], 0.7f64.exp(), epsilon = 1e-12);
    }

    fn two_group_exponential(m_per: usize, seed: u64) -> GlmModel {
        // rows (0, 1) for group 1 and (1, 1) for group 2: coordinate 0 is the
        // canonical interest (difference of natural parameters)
        let n = 2 * m_per;
        let mut x = DMatrix::zeros(n, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = DVector::zeros(n);
        for i in 0..n {
            let group2 = i >= m_per;
            x[(i, 0)] = if group2 { 1.0 } else { 0.0 };
            x[(i, 1)] = 1.0;
            let rate = if group2 { 1.4 } else { 0.9 };
            let u: f64 = rng.random();
            y[i] = -(1.0 - u).ln() / rate;
        }
        GlmModel::new(x, y, GlmFamily::Exponential, f64::INFINITY).unwrap()
    }

    #[test]
    fn mean_parametrization_round_trips() {
        let glm = two_group_exponential(15, 21);
        let beta = DVector::from_vec(vec![-0.3, -1.1]);
        let mixed = to_mean_parametrization(&glm, &beta);
        let back =
            from_mean_parametrization(&glm, &mixed, Some(&DVector::from_element(1, -1.0))).unwrap();
        assert_relative_eq!(back[0], beta[0], epsilon = 1e-10);
        assert_relative_eq!(back[1], beta[1], epsilon = 1e-10);
    }

    #[test]
    fn profile_nuisance_constant_in_mixed_coordinates() {
        // exponential-family orthogonality: the constrained maximizer of the
        // nuisance mean coordinate does not move with the pinned interest value
        let glm = two_group_exponential(20, 33);
        let wrapper = MeanParametrizedGlm::new(&glm, DVector::from_vec(vec![-0.3, -1.0])).unwrap();
        let observed_mean = glm.y().sum() / glm.sample_n() as f64; // x_1 column is all ones
        let opts = NewtonOptions {
            max_iter: 200,
            tol_grad: 1e-11,
        };
        for psi in [-0.6, -0.3, 0.1] {
            let c = constrained_mode(
                &wrapper,
                0,
                psi,
                &DVector::from_element(1, observed_mean),
                &opts,
            )
            .unwrap();
            assert_relative_eq!(c.theta_hat_psi[1], observed_mean, epsilon = 1e-8);
        }
    }

    #[test]
    fn mixed_hessian_cross_block_vanishes_at_constrained_mode() {
        let glm = two_group_exponential(20, 44);
        let wrapper = MeanParametrizedGlm::new(&glm, DVector::from_vec(vec![-0.3, -1.0])).unwrap();
        let observed_mean = glm.y().sum() / glm.sample_n() as f64;
        let opts = NewtonOptions {
            max_iter: 200,
            tol_grad: 1e-11,
        };
        let psi = -0.45;
        let c = constrained_mode(
            &wrapper,
            0,
            psi,
            &DVector::from_element(1, observed_mean),
            &opts,
        )
        .unwrap();
        let h = wrapper.hess(&c.theta_hat_psi);
        let scale = h[(1, 1)].abs().max(h[(0, 0)].abs());
        assert!(
            (h[(0, 1)] / scale).abs() < 1e-8,
            "cross block {} at scale {scale}",
            h[(0, 1)]
        );
    }

    #[test]
    fn inverse_map_rejects_unreachable_means() {
        // exponential means are positive: a negative nuisance mean target cannot be hit
        let glm = two_group_exponential(10, 55);
        let mixed = DVector::from_vec(vec![-0.3, -2.0]);
        assert!(matches!(
            from_mean_parametrization(&glm, &mixed, Some(&DVector::from_element(1, -1.0))),
            Err(Error::InverseMapDiverged { .. })
        ));
    }
}
