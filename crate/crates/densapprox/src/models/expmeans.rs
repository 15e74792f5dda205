//! Several groups of exponential observations with a rate offset per group.
//!
//! With `g` groups of `m` observations each and group rates `eta_j`, the
//! coordinates are `theta = (psi_1, ..., psi_{g-1}, lambda)` where
//! `eta_j = lambda + psi_1 + ... + psi_{j-1}`: `lambda` is the rate of the
//! first group and each `psi` is the rate increment to the next group. The
//! log-likelihood depends on the data only through the group sums `u_j`:
//!
//! `g(theta) = sum_j ( m ln eta_j - u_j eta_j )`.
//!
//! The companion [`PartialSumCgf`] carries the cumulant generating function of
//! the cumulative sums `(u_1, u_1+u_2, ...)` under a common null rate, which is
//! the statistic used to condition the first group sum on the total.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{CumulantModel, LogTargetModel};

#[derive(Debug, Clone)]
pub struct ExponentialMeansModel {
    per_group: usize,
    u: DVector<f64>,
    null_rate: f64,
}

impl ExponentialMeansModel {
    /// Build from observed group sums; the null rate defaults to the pooled
    /// maximum-likelihood rate `g * m / sum(u)`.
    pub fn new(u: DVector<f64>, per_group: usize) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::Invalid("need at least one group".into()));
        }
        if per_group == 0 {
            return Err(Error::Invalid(
                "need at least one observation per group".into(),
            ));
        }
        if u.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Invalid("group sums must be positive".into()));
        }
        let null_rate = (u.len() * per_group) as f64 / u.sum();
        Ok(ExponentialMeansModel {
            per_group,
            u,
            null_rate,
        })
    }

    pub fn with_null_rate(mut self, rate: f64) -> Result<Self> {
        if !(rate > 0.0) {
            return Err(Error::Invalid("null rate must be positive".into()));
        }
        self.null_rate = rate;
        Ok(self)
    }

    /// Draw `m` observations per group at the given rates and keep the sums.
    pub fn simulate(
        groups: usize,
        per_group: usize,
        rates: &DVector<f64>,
        seed: u64,
    ) -> Result<Self> {
        if rates.len() != groups {
            return Err(Error::Invalid("one rate per group required".into()));
        }
        if rates.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::Invalid("rates must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = DVector::from_fn(groups, |j, _| {
            (0..per_group)
                .map(|_| -f64::ln_1p(-rng.random::<f64>()) / rates[j])
                .sum()
        });
        Self::new(u, per_group)
    }

    pub fn groups(&self) -> usize {
        self.u.len()
    }

    pub fn per_group(&self) -> usize {
        self.per_group
    }

    pub fn observed_sums(&self) -> &DVector<f64> {
        &self.u
    }

    pub fn null_rate(&self) -> f64 {
        self.null_rate
    }

    /// `eta = A theta`; row `j` has ones on `lambda` and on `psi_k, k < j`.
    pub fn a_matrix(&self) -> DMatrix<f64> {
        let g = self.groups();
        DMatrix::from_fn(g, g, |j, k| if k == g - 1 || k < j { 1.0 } else { 0.0 })
    }

    pub fn eta(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.a_matrix() * theta
    }

    /// Closed-form maximum likelihood point: `eta_hat_j = m / u_j` mapped back
    /// through the rate increments.
    pub fn mle(&self) -> DVector<f64> {
        let g = self.groups();
        let m = self.per_group as f64;
        let eta_hat = DVector::from_fn(g, |j, _| m / self.u[j]);
        let mut theta = DVector::zeros(g);
        theta[g - 1] = eta_hat[0];
        for k in 0..g - 1 {
            theta[k] = eta_hat[k + 1] - eta_hat[k];
        }
        theta
    }

    /// Cumulant generating function of the cumulative group sums under the
    /// null rate.
    pub fn partial_sum_cgf(&self) -> PartialSumCgf {
        PartialSumCgf {
            groups: self.groups(),
            per_group: self.per_group,
            null_rate: self.null_rate,
        }
    }

    /// Cumulative sums `(u_1, u_1+u_2, ...)` of the observed group sums.
    pub fn observed_partial_sums(&self) -> DVector<f64> {
        let mut acc = 0.0;
        DVector::from_fn(self.groups(), |j, _| {
            acc += self.u[j];
            acc
        })
    }

    /// Exact conditional log density of the first group sum given the total
    /// when both groups share one rate: `u_1 / total` is Beta(m, m), so
    /// `f(u_1 | total) = Beta(u_1/total; m, m) / total`. Two groups only.
    pub fn exact_conditional_log_density(&self, u1: f64, total: f64) -> Result<f64> {
        if self.groups() != 2 {
            return Err(Error::Invalid(
                "exact conditional requires exactly two groups".into(),
            ));
        }
        if !(total > 0.0) {
            return Err(Error::OutOfSupport("total must be positive".into()));
        }
        if !(u1 > 0.0 && u1 < total) {
            return Err(Error::OutOfSupport(
                "first group sum must lie strictly between 0 and the total".into(),
            ));
        }
        let m = self.per_group as f64;
        Ok(
            ln_gamma(2.0 * m) - 2.0 * ln_gamma(m) + (m - 1.0) * (u1.ln() + (total - u1).ln())
                - (2.0 * m - 1.0) * total.ln(),
        )
    }
}

impl LogTargetModel for ExponentialMeansModel {
    fn dim_p(&self) -> usize {
        self.groups()
    }

    fn sample_n(&self) -> usize {
        self.groups() * self.per_group
    }

    fn eval(&self, theta: &DVector<f64>) -> f64 {
        let eta = self.eta(theta);
        if eta.iter().any(|&e| e <= 0.0) {
            return f64::NEG_INFINITY;
        }
        let m = self.per_group as f64;
        eta.iter()
            .zip(self.u.iter())
            .map(|(&e, &uj)| m * e.ln() - uj * e)
            .sum()
    }

    fn grad(&self, theta: &DVector<f64>) -> DVector<f64> {
        let eta = self.eta(theta);
        let m = self.per_group as f64;
        let v = DVector::from_fn(self.groups(), |j, _| -self.u[j] + m / eta[j]);
        self.a_matrix().transpose() * v
    }

    fn hess(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let eta = self.eta(theta);
        let m = self.per_group as f64;
        let a = self.a_matrix();
        let mut scaled = a.clone();
        for (j, mut row) in scaled.row_iter_mut().enumerate() {
            row *= -m / (eta[j] * eta[j]);
        }
        a.transpose() * scaled
    }

    fn third_slice(&self, theta: &DVector<f64>, l: usize) -> Option<DMatrix<f64>> {
        let eta = self.eta(theta);
        let m = self.per_group as f64;
        let a = self.a_matrix();
        let mut scaled = a.clone();
        for (j, mut row) in scaled.row_iter_mut().enumerate() {
            row *= 2.0 * m / (eta[j] * eta[j] * eta[j]) * a[(j, l)];
        }
        Some(a.transpose() * scaled)
    }

    fn fourth_slice(&self, theta: &DVector<f64>, l: usize, m_idx: usize) -> Option<DMatrix<f64>> {
        let eta = self.eta(theta);
        let m = self.per_group as f64;
        let a = self.a_matrix();
        let mut scaled = a.clone();
        for (j, mut row) in scaled.row_iter_mut().enumerate() {
            let e2 = eta[j] * eta[j];
            row *= -6.0 * m / (e2 * e2) * a[(j, l)] * a[(j, m_idx)];
        }
        Some(a.transpose() * scaled)
    }
}

/// CGF of the cumulative group sums `(u_1, u_1+u_2, ...)` when every
/// observation is exponential with the shared `null_rate`.
///
/// With tail sums `c_k = t_k + ... + t_g`,
/// `K(t) = -m sum_k ln(1 - c_k / null_rate)`.
#[derive(Debug, Clone)]
pub struct PartialSumCgf {
    groups: usize,
    per_group: usize,
    null_rate: f64,
}

impl PartialSumCgf {
    fn tail_sums(&self, t: &DVector<f64>) -> DVector<f64> {
        let g = self.groups;
        let mut c = DVector::zeros(g);
        let mut acc = 0.0;
        for k in (0..g).rev() {
            acc += t[k];
            c[k] = acc;
        }
        c
    }
}

impl CumulantModel for PartialSumCgf {
    fn dim_p(&self) -> usize {
        self.groups
    }

    fn sample_n(&self) -> usize {
        self.groups * self.per_group
    }

    fn k_eval(&self, t: &DVector<f64>) -> f64 {
        let m = self.per_group as f64;
        -m * self
            .tail_sums(t)
            .iter()
            .map(|&c| f64::ln_1p(-c / self.null_rate))
            .sum::<f64>()
    }

    fn k_grad(&self, t: &DVector<f64>) -> DVector<f64> {
        let m = self.per_group as f64;
        let c = self.tail_sums(t);
        let mut acc = 0.0;
        DVector::from_fn(self.groups, |i, _| {
            acc += 1.0 / (self.null_rate - c[i]);
            m * acc
        })
    }

    fn k_hess(&self, t: &DVector<f64>) -> DMatrix<f64> {
        let m = self.per_group as f64;
        let c = self.tail_sums(t);
        let g = self.groups;
        let mut prefix = DVector::zeros(g);
        let mut acc = 0.0;
        for k in 0..g {
            let d = self.null_rate - c[k];
            acc += 1.0 / (d * d);
            prefix[k] = acc;
        }
        DMatrix::from_fn(g, g, |i, l| m * prefix[i.min(l)])
    }

    fn in_domain(&self, t: &DVector<f64>) -> bool {
        self.tail_sums(t).iter().all(|&c| c < self.null_rate)
    }
}
