//! Cumulant generating function of the sufficient statistic of an exponential
//! regression: responses `y_j ~ Exp(rate_j)` with `rate_j = x_j' beta0 > 0` and
//! statistic `S = -X'y` (each response enters through `-x_j y_j`).
//!
//! `K(t) = -sum_j ln(1 + x_j't / rate_j)` on the region where every argument of
//! the logarithm stays positive; `K'(0) = -sum_j x_j / rate_j` gives a closed
//! form for the mean of the statistic.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::CumulantModel;

#[derive(Debug, Clone)]
pub struct ExponentialRegressionCgf {
    x: DMatrix<f64>,
    rates: DVector<f64>,
}

impl ExponentialRegressionCgf {
    /// Build from a design and `beta0`; every row must satisfy `x_j' beta0 > 0`.
    pub fn new(x: DMatrix<f64>, beta0: &DVector<f64>) -> Result<Self> {
        if x.ncols() != beta0.len() {
            return Err(Error::Invalid("design columns and beta0 disagree".into()));
        }
        let rates = &x * beta0;
        if rates.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::Invalid(
                "every row must have positive rate x_j' beta0".into(),
            ));
        }
        Ok(ExponentialRegressionCgf { x, rates })
    }

    /// Draw a standard-normal design, redrawing any row whose rate under
    /// `beta0` is not strictly positive. Returns the model and the number of
    /// rejected rows.
    pub fn simulate(n: usize, p: usize, beta0: &DVector<f64>, seed: u64) -> Result<(Self, usize)> {
        if beta0.len() != p {
            return Err(Error::Invalid("beta0 dimension must match p".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = DMatrix::zeros(n, p);
        let mut rejections = 0usize;
        for i in 0..n {
            loop {
                let row = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
                if beta0.dot(&row) > 0.0 {
                    x.set_row(i, &row.transpose());
                    break;
                }
                rejections += 1;
            }
        }
        Ok((Self::new(x, beta0)?, rejections))
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn rates(&self) -> &DVector<f64> {
        &self.rates
    }

    /// `K'(0) = -sum_j x_j / rate_j`, the mean of the statistic.
    pub fn mean_at_origin(&self) -> DVector<f64> {
        let inv_rates = self.rates.map(|r| 1.0 / r);
        -(self.x.transpose() * inv_rates)
    }

    /// `1 + x_j't / rate_j` per observation.
    fn factors(&self, t: &DVector<f64>) -> DVector<f64> {
        let w = &self.x * t;
        DVector::from_fn(w.len(), |j, _| 1.0 + w[j] / self.rates[j])
    }
}

impl CumulantModel for ExponentialRegressionCgf {
    fn dim_p(&self) -> usize {
        self.x.ncols()
    }
    fn sample_n(&self) -> usize {
        self.x.nrows()
    }

    fn k_eval(&self, t: &DVector<f64>) -> f64 {
        -self.factors(t).iter().map(|f| f.ln()).sum::<f64>()
    }

    fn k_grad(&self, t: &DVector<f64>) -> DVector<f64> {
        // -sum_j x_j / (rate_j + x_j't)
        let f = self.factors(t);
        let weights = DVector::from_fn(f.len(), |j, _| 1.0 / (self.rates[j] * f[j]));
        -(self.x.transpose() * weights)
    }

    fn k_hess(&self, t: &DVector<f64>) -> DMatrix<f64> {
        let f = self.factors(t);
        let mut scaled = self.x.clone();
        for (j, mut row) in scaled.row_iter_mut().enumerate() {
            let d = self.rates[j] * f[j];
            row /= d * d;
        }
        self.x.transpose() * scaled
    }

    fn in_domain(&self, t: &DVector<f64>) -> bool {
        self.factors(t).iter().all(|&f| f > 0.0)
    }
}
