//! Bayesian logistic regression with independent N(0, prior_sd^2) coefficient
//! priors: the workhorse model for posterior-normalizer scaling studies.
//!
//! `g(beta) = sum_j [y_j eta_j - log(1 + e^eta_j)] - |beta|^2 / (2 prior_sd^2)`
//! with `eta = X beta`. All derivative tensors are analytic; the third and
//! fourth directional slices feed the assumption audit.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::LogTargetModel;

/// Numerically stable `1 / (1 + e^-z)`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + e^z)`.
pub fn log1pexp(z: f64) -> f64 {
    if z > 35.0 {
        z + (-z).exp()
    } else if z < -35.0 {
        z.exp()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone)]
pub struct LogisticRegressionModel {
    x: DMatrix<f64>,
    y: DVector<f64>,
    prior_sd: f64,
}

impl LogisticRegressionModel {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, prior_sd: f64) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Invalid("design rows and responses disagree".into()));
        }
        if y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Invalid("responses must be 0/1".into()));
        }
        if !(prior_sd > 0.0) {
            return Err(Error::Invalid(format!(
                "prior sd must be positive, got {prior_sd}"
            )));
        }
        Ok(LogisticRegressionModel { x, y, prior_sd })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn prior_sd(&self) -> f64 {
        self.prior_sd
    }

    fn eta(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.x * beta
    }

    /// `-X' diag(w) X - I/sd^2` for a per-observation weight vector; shared by
    /// the Hessian and the higher-order slices (which drop the prior term).
    fn weighted_neg_gram(&self, w: &DVector<f64>, with_prior: bool) -> DMatrix<f64> {
        let p = self.x.ncols();
        let mut scaled = self.x.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let mut out = -(self.x.transpose() * scaled);
        if with_prior {
            let prec = 1.0 / (self.prior_sd * self.prior_sd);
            for i in 0..p {
                out[(i, i)] -= prec;
            }
        }
        out
    }
}

impl LogTargetModel for LogisticRegressionModel {
    fn dim_p(&self) -> usize {
        self.x.ncols()
    }
    fn sample_n(&self) -> usize {
        self.x.nrows()
    }

    fn eval(&self, beta: &DVector<f64>) -> f64 {
        let eta = self.eta(beta);
        let loglik: f64 = eta
            .iter()
            .zip(self.y.iter())
            .map(|(&e, &y)| y * e - log1pexp(e))
            .sum();
        loglik - beta.dot(beta) / (2.0 * self.prior_sd * self.prior_sd)
    }

    fn grad(&self, beta: &DVector<f64>) -> DVector<f64> {
        let eta = self.eta(beta);
        let resid = DVector::from_fn(eta.len(), |i, _| self.y[i] - sigmoid(eta[i]));
        self.x.transpose() * resid - beta / (self.prior_sd * self.prior_sd)
    }

    fn hess(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let eta = self.eta(beta);
        let w = eta.map(|e| {
            let p = sigmoid(e);
            p * (1.0 - p)
        });
        self.weighted_neg_gram(&w, true)
    }

    fn third_slice(&self, beta: &DVector<f64>, l: usize) -> Option<DMatrix<f64>> {
        let eta = self.eta(beta);
        let w = DVector::from_fn(eta.len(), |i, _| {
            let p = sigmoid(eta[i]);
            p * (1.0 - p) * (1.0 - 2.0 * p) * self.x[(i, l)]
        });
        Some(self.weighted_neg_gram(&w, false))
    }

    fn fourth_slice(&self, beta: &DVector<f64>, l: usize, m: usize) -> Option<DMatrix<f64>> {
        let eta = self.eta(beta);
        let w = DVector::from_fn(eta.len(), |i, _| {
            let p = sigmoid(eta[i]);
            p * (1.0 - p) * (1.0 - 6.0 * p + 6.0 * p * p) * self.x[(i, l)] * self.x[(i, m)]
        });
        Some(self.weighted_neg_gram(&w, false))
    }
}

/// Draw a design with i.i.d. standard-normal entries and Bernoulli responses
/// under `beta0`, with the unit-variance prior. Fully determined by `seed`.
pub fn simulate_logistic(
    n: usize,
    p: usize,
    beta0: &DVector<f64>,
    seed: u64,
) -> Result<LogisticRegressionModel> {
    if beta0.len() != p {
        return Err(Error::Invalid("beta0 dimension must match p".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let eta = &x * beta0;
    let y = DVector::from_fn(n, |i, _| {
        if rng.random::<f64>() < sigmoid(eta[i]) {
            1.0
        } else {
            0.0
        }
    });
    LogisticRegressionModel::new(x, y, 1.0)
}
