//! Closed-form reference models: Gaussian-conjugate quadratic targets, the 1-D
//! `n(theta - e^theta)` family whose normalizer is `Gamma(n) n^-n e^n`, and
//! gamma/normal cumulant generating functions. These are the models with exact
//! answers that every engine is checked against.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{CumulantModel, LogTargetModel};

const LN_2PI: f64 = 1.8378770664093453;

/// Quadratic log target `g(theta) = -1/2 (theta - mu)' Q (theta - mu)` with Q
/// positive definite. The normalized target is exactly N(mu, Q^-1), so the
/// Laplace approximation is exact here.
#[derive(Debug, Clone)]
pub struct QuadraticModel {
    mu: DVector<f64>,
    q: DMatrix<f64>,
    chol_q: Cholesky<f64, Dyn>,
    n: usize,
}

impl QuadraticModel {
    pub fn new(mu: DVector<f64>, q: DMatrix<f64>, n: usize) -> Result<Self> {
        if q.nrows() != mu.len() || q.ncols() != mu.len() {
            return Err(Error::Invalid(
                "curvature matrix does not match mean dimension".into(),
            ));
        }
        let chol_q = Cholesky::new(q.clone()).ok_or(Error::IndefiniteCurvature { jitter: 0.0 })?;
        Ok(QuadraticModel { mu, q, chol_q, n })
    }

    /// `g(theta) = -(n/2) theta' theta + a' theta` up to a constant: curvature
    /// `n I`, mode `a / n`.
    pub fn isotropic(n: usize, a: DVector<f64>) -> Self {
        let p = a.len();
        let q = DMatrix::identity(p, p) * n as f64;
        let mu = a / n as f64;
        Self::new(mu, q, n).expect("isotropic curvature is positive definite")
    }

    /// Random well-conditioned curvature `n (I + 0.3 A'A / p)` and a random mean.
    pub fn random_spd(p: usize, n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = (DMatrix::identity(p, p) + (a.transpose() * &a) * (0.3 / p as f64)) * n as f64;
        let mu = DVector::from_fn(p, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
        Self::new(mu, q, n).expect("shifted Gram matrix is positive definite")
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    fn log_det_q(&self) -> f64 {
        2.0 * self
            .chol_q
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>()
    }

    /// Exact normalized log density at `theta` (the target is N(mu, Q^-1)).
    pub fn exact_log_density(&self, theta: &DVector<f64>) -> f64 {
        let d = theta - &self.mu;
        0.5 * self.log_det_q() - 0.5 * self.mu.len() as f64 * LN_2PI - 0.5 * d.dot(&(&self.q * &d))
    }

    /// Exact `log integral exp{g - g(mode)} = (p/2) log 2pi - 1/2 log det Q`.
    pub fn exact_log_normalizer(&self) -> f64 {
        0.5 * self.mu.len() as f64 * LN_2PI - 0.5 * self.log_det_q()
    }
}

impl LogTargetModel for QuadraticModel {
    fn dim_p(&self) -> usize {
        self.mu.len()
    }
    fn sample_n(&self) -> usize {
        self.n
    }
    fn eval(&self, theta: &DVector<f64>) -> f64 {
        let d = theta - &self.mu;
        -0.5 * d.dot(&(&self.q * &d))
    }
    fn grad(&self, theta: &DVector<f64>) -> DVector<f64> {
        -(&self.q * (theta - &self.mu))
    }
    fn hess(&self, _theta: &DVector<f64>) -> DMatrix<f64> {
        -self.q.clone()
    }
    fn third_slice(&self, _theta: &DVector<f64>, _l: usize) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(self.mu.len(), self.mu.len()))
    }
    fn fourth_slice(&self, _theta: &DVector<f64>, _l: usize, _m: usize) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(self.mu.len(), self.mu.len()))
    }
}

/// One-dimensional target `g(theta) = n (theta - e^theta)`, mode at 0 with
/// curvature `-n`. Substituting `u = n e^theta` shows
/// `integral exp{g - g(0)} = Gamma(n) n^-n e^n`, which makes the family a sharp
/// closed-form test of normalizer accuracy for every real `n > 0`.
#[derive(Debug, Clone, Copy)]
pub struct StirlingFamily {
    pub n: f64,
}

impl StirlingFamily {
    pub fn new(n: f64) -> Result<Self> {
        if !(n > 0.0) {
            return Err(Error::Invalid(format!("scale n must be positive, got {n}")));
        }
        Ok(StirlingFamily { n })
    }

    /// `log integral exp{g - g(0)} = ln Gamma(n) - n ln n + n`, exactly.
    pub fn log_true_normalizer(&self) -> f64 {
        ln_gamma(self.n) - self.n * self.n.ln() + self.n
    }

    /// Closed-form ratio (Laplace normalizer) / (true normalizer)
    /// `= sqrt(2 pi) n^(n - 1/2) e^-n / Gamma(n)`; approaches 1 from below.
    pub fn laplace_to_true_ratio(&self) -> f64 {
        let log_ratio = 0.5 * (2.0 * std::f64::consts::PI).ln() + (self.n - 0.5) * self.n.ln()
            - self.n
            - ln_gamma(self.n);
        log_ratio.exp()
    }
}

impl LogTargetModel for StirlingFamily {
    fn dim_p(&self) -> usize {
        1
    }
    fn sample_n(&self) -> usize {
        self.n.round().max(1.0) as usize
    }
    fn eval(&self, theta: &DVector<f64>) -> f64 {
        self.n * (theta[0] - theta[0].exp())
    }
    fn grad(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, self.n * (1.0 - theta[0].exp()))
    }
    fn hess(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, -self.n * theta[0].exp())
    }
    fn third_slice(&self, theta: &DVector<f64>, _l: usize) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, -self.n * theta[0].exp()))
    }
    fn fourth_slice(&self, theta: &DVector<f64>, _l: usize, _m: usize) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, -self.n * theta[0].exp()))
    }
}

/// CGF of a Gamma(shape, 1) statistic (the sum of `shape` unit-rate
/// exponentials when `shape` is an integer): `K(t) = -shape ln(1 - t)`, `t < 1`.
#[derive(Debug, Clone, Copy)]
pub struct GammaCgf {
    pub shape: f64,
}

impl GammaCgf {
    pub fn new(shape: f64) -> Result<Self> {
        if !(shape > 0.0) {
            return Err(Error::Invalid(format!(
                "shape must be positive, got {shape}"
            )));
        }
        Ok(GammaCgf { shape })
    }

    /// The saddle equation `shape / (1 - t) = s` solves to `t = 1 - shape/s`.
    pub fn saddle_closed_form(&self, s: f64) -> f64 {
        1.0 - self.shape / s
    }
}

impl CumulantModel for GammaCgf {
    fn dim_p(&self) -> usize {
        1
    }
    fn sample_n(&self) -> usize {
        self.shape.round().max(1.0) as usize
    }
    fn k_eval(&self, t: &DVector<f64>) -> f64 {
        -self.shape * (1.0 - t[0]).ln()
    }
    fn k_grad(&self, t: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, self.shape / (1.0 - t[0]))
    }
    fn k_hess(&self, t: &DVector<f64>) -> DMatrix<f64> {
        let d = 1.0 - t[0];
        DMatrix::from_element(1, 1, self.shape / (d * d))
    }
    fn in_domain(&self, t: &DVector<f64>) -> bool {
        t[0] < 1.0
    }
}

/// CGF of a N(mean, cov) vector: `K(t) = mean' t + 1/2 t' cov t`, defined
/// everywhere. The saddlepoint approximation is exact for this family.
#[derive(Debug, Clone)]
pub struct NormalCgf {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol_cov: Cholesky<f64, Dyn>,
}

impl NormalCgf {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::Invalid(
                "covariance does not match mean dimension".into(),
            ));
        }
        let chol_cov =
            Cholesky::new(cov.clone()).ok_or(Error::IndefiniteCurvature { jitter: 0.0 })?;
        Ok(NormalCgf {
            mean,
            cov,
            chol_cov,
        })
    }

    pub fn iid(p: usize, variance: f64) -> Result<Self> {
        Self::new(DVector::zeros(p), DMatrix::identity(p, p) * variance)
    }

    /// Random well-conditioned covariance for exactness sweeps.
    pub fn random_spd(p: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let cov = DMatrix::identity(p, p) + (a.transpose() * &a) * (0.5 / p as f64);
        let mean = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        Self::new(mean, cov).expect("shifted Gram matrix is positive definite")
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Exact N(mean, cov) log density.
    pub fn exact_log_density(&self, s: &DVector<f64>) -> f64 {
        let p = self.mean.len() as f64;
        let log_det = 2.0
            * self
                .chol_cov
                .l_dirty()
                .diagonal()
                .iter()
                .map(|d| d.ln())
                .sum::<f64>();
        let d = s - &self.mean;
        let white = self.chol_cov.solve(&d);
        -0.5 * p * LN_2PI - 0.5 * log_det - 0.5 * d.dot(&white)
    }
}

impl CumulantModel for NormalCgf {
    fn dim_p(&self) -> usize {
        self.mean.len()
    }
    fn sample_n(&self) -> usize {
        1
    }
    fn k_eval(&self, t: &DVector<f64>) -> f64 {
        self.mean.dot(t) + 0.5 * t.dot(&(&self.cov * t))
    }
    fn k_grad(&self, t: &DVector<f64>) -> DVector<f64> {
        &self.mean + &self.cov * t
    }
    fn k_hess(&self, _t: &DVector<f64>) -> DMatrix<f64> {
        self.cov.clone()
    }
    fn in_domain(&self, _t: &DVector<f64>) -> bool {
        true
    }
}
