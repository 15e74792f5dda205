//! Saddlepoint approximation engine: the tilted-Gaussian density built from a
//! cumulant generating function, its conditional (double-saddle) variant, and
//! quadrature renormalization in one dimension.
//!
//! For a statistic with CGF `K` the saddle `t_hat` solves `K'(t_hat) = s`
//! (unique on the domain because `K` is strictly convex), and
//!
//! ```text
//! log fhat(s) = K(t_hat) - t_hat's - (p/2) log 2pi - 1/2 log det K''(t_hat)
//! ```
//!
//! The conditional density of the first component given the rest divides two
//! such approximations: the full one at `(s1, s2)` and the nuisance one built
//! from `t_lambda -> K(0, t_lambda)`, the CGF of `s2` alone:
//!
//! ```text
//! log fhat(s1|s2) = 1/2 log det K''_ll(0, t_tilde) - 1/2 log(2pi det K''(t_hat))
//!                   + K(t_hat) - K(0, t_tilde) + t_tilde's2 - t_hat'(s1, s2)
//! ```
//!
//! Everything is evaluated on the real axis only.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::linalg::{log_det_from_cholesky, symmetrize};
use crate::model::CumulantModel;
use crate::quad::{self, QuadOptions, QuadResult};

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, Copy)]
pub struct SaddleOptions {
    pub max_iter: usize,
    /// Convergence when `||K'(t) - s|| <= tol * (1 + ||s||)`.
    pub tol: f64,
    /// Step halvings allowed per iteration to stay in the domain with a
    /// residual decrease.
    pub max_halvings: usize,
}

impl Default for SaddleOptions {
    fn default() -> Self {
        SaddleOptions {
            max_iter: 100,
            tol: 1e-10,
            max_halvings: 200,
        }
    }
}

/// Solved saddle with the curvature factorization downstream formulas need.
#[derive(Debug, Clone)]
pub struct SaddleResult {
    pub t_hat: DVector<f64>,
    pub k_at_saddle: f64,
    pub k_hess_chol: Cholesky<f64, Dyn>,
    pub log_det_k_hess: f64,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Newton solve of `K'(t) = s` starting from `init` (origin when `None`; the
/// origin is always inside the domain). Steps are halved until the iterate is
/// in the domain and the residual decreases.
pub fn solve_saddle<C: CumulantModel + ?Sized>(
    cgf: &C,
    s: &DVector<f64>,
    init: Option<&DVector<f64>>,
    opts: &SaddleOptions,
) -> Result<SaddleResult> {
    let p = cgf.dim_p();
    if s.len() != p {
        return Err(Error::Invalid(format!(
            "statistic has dimension {}, CGF wants {p}",
            s.len()
        )));
    }
    let mut t = init.cloned().unwrap_or_else(|| DVector::zeros(p));
    if !cgf.in_domain(&t) {
        return Err(Error::DomainEscape { halvings: 0 });
    }
    let tol = opts.tol * (1.0 + s.norm());
    let mut residual = cgf.k_grad(&t) - s;
    let mut res_norm = residual.norm();
    for iter in 0..=opts.max_iter {
        if res_norm <= tol {
            let chol = Cholesky::new(symmetrize(&cgf.k_hess(&t)))
                .ok_or(Error::IndefiniteCurvature { jitter: 0.0 })?;
            let log_det = log_det_from_cholesky(&chol);
            return Ok(SaddleResult {
                k_at_saddle: cgf.k_eval(&t),
                t_hat: t,
                k_hess_chol: chol,
                log_det_k_hess: log_det,
                residual_norm: res_norm,
                iterations: iter,
            });
        }
        if iter == opts.max_iter {
            break;
        }
        let chol = Cholesky::new(symmetrize(&cgf.k_hess(&t)))
            .ok_or(Error::IndefiniteCurvature { jitter: 0.0 })?;
        let direction = -chol.solve(&residual);
        let mut alpha = 1.0;
        let mut accepted = false;
        let mut domain_blocked = true;
        for _ in 0..=opts.max_halvings {
            let candidate = &t + &direction * alpha;
            if cgf.in_domain(&candidate) {
                domain_blocked = false;
                let cand_residual = cgf.k_grad(&candidate) - s;
                let cand_norm = cand_residual.norm();
                if cand_norm < res_norm {
                    t = candidate;
                    residual = cand_residual;
                    res_norm = cand_norm;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            if domain_blocked {
                return Err(Error::DomainEscape {
                    halvings: opts.max_halvings,
                });
            }
            return Err(Error::MaxIterations {
                iters: iter,
                residual: res_norm,
                tol,
            });
        }
    }
    Err(Error::MaxIterations {
        iters: opts.max_iter,
        residual: res_norm,
        tol,
    })
}

/// Saddlepoint log density of the statistic at `s`.
pub fn saddlepoint_log_density<C: CumulantModel + ?Sized>(
    cgf: &C,
    s: &DVector<f64>,
    opts: &SaddleOptions,
) -> Result<f64> {
    let saddle = solve_saddle(cgf, s, None, opts)?;
    Ok(saddlepoint_log_density_from(cgf, s, &saddle))
}

/// The density formula given an already-solved saddle.
pub fn saddlepoint_log_density_from<C: CumulantModel + ?Sized>(
    cgf: &C,
    s: &DVector<f64>,
    saddle: &SaddleResult,
) -> f64 {
    let p = cgf.dim_p() as f64;
    saddle.k_at_saddle - saddle.t_hat.dot(s) - 0.5 * p * LN_2PI - 0.5 * saddle.log_det_k_hess
}

/// View of a CGF with the first (interest) tilt pinned at zero: the CGF of the
/// conditioning block `s2`.
struct NuisanceCgf<'a, C: CumulantModel + ?Sized> {
    cgf: &'a C,
}

impl<C: CumulantModel + ?Sized> NuisanceCgf<'_, C> {
    fn embed(&self, t_lambda: &DVector<f64>) -> DVector<f64> {
        let mut t = DVector::zeros(self.cgf.dim_p());
        t.rows_mut(1, t_lambda.len()).copy_from(t_lambda);
        t
    }
}

impl<C: CumulantModel + ?Sized> CumulantModel for NuisanceCgf<'_, C> {
    fn dim_p(&self) -> usize {
        self.cgf.dim_p() - 1
    }
    fn sample_n(&self) -> usize {
        self.cgf.sample_n()
    }
    fn k_eval(&self, t_lambda: &DVector<f64>) -> f64 {
        self.cgf.k_eval(&self.embed(t_lambda))
    }
    fn k_grad(&self, t_lambda: &DVector<f64>) -> DVector<f64> {
        let full = self.cgf.k_grad(&self.embed(t_lambda));
        full.rows(1, t_lambda.len()).into_owned()
    }
    fn k_hess(&self, t_lambda: &DVector<f64>) -> DMatrix<f64> {
        let q = t_lambda.len();
        let full = self.cgf.k_hess(&self.embed(t_lambda));
        full.view((1, 1), (q, q)).into_owned()
    }
    fn in_domain(&self, t_lambda: &DVector<f64>) -> bool {
        self.cgf.in_domain(&self.embed(t_lambda))
    }
}

/// Conditional saddlepoint approximation of the first component given the rest.
#[derive(Debug, Clone)]
pub struct DoubleSaddleResult {
    pub t_hat_full: DVector<f64>,
    pub t_tilde_lambda: DVector<f64>,
    pub log_det_full: f64,
    pub log_det_nuisance: f64,
    pub log_cond_density: f64,
    pub residual_full: f64,
    pub residual_nuisance: f64,
}

/// Approximate `log f(s1 | s2)` for the statistic with joint CGF `cgf`, where
/// `s1` is the first component and `s2` the remaining p-1.
pub fn double_saddle_log_conditional<C: CumulantModel + ?Sized>(
    cgf: &C,
    s1: f64,
    s2: &DVector<f64>,
    opts: &SaddleOptions,
) -> Result<DoubleSaddleResult> {
    let p = cgf.dim_p();
    if s2.len() + 1 != p {
        return Err(Error::Invalid(format!(
            "conditioning block has dimension {}, CGF wants {}",
            s2.len(),
            p - 1
        )));
    }
    let mut s = DVector::zeros(p);
    s[0] = s1;
    s.rows_mut(1, p - 1).copy_from(s2);

    let full = solve_saddle(cgf, &s, None, opts)?;
    let nuisance_view = NuisanceCgf { cgf };
    let nuisance = solve_saddle(&nuisance_view, s2, None, opts)?;

    let log_cond = 0.5 * nuisance.log_det_k_hess - 0.5 * (LN_2PI + full.log_det_k_hess)
        + full.k_at_saddle
        - nuisance.k_at_saddle
        + nuisance.t_hat.dot(s2)
        - full.t_hat.dot(&s);
    Ok(DoubleSaddleResult {
        t_hat_full: full.t_hat,
        t_tilde_lambda: nuisance.t_hat,
        log_det_full: full.log_det_k_hess,
        log_det_nuisance: nuisance.log_det_k_hess,
        log_cond_density: log_cond,
        residual_full: full.residual_norm,
        residual_nuisance: nuisance.residual_norm,
    })
}

/// Endpoint density threshold (relative to the interior max) above which the
/// renormalization bounds are flagged as clipping real mass.
pub const ENDPOINT_MASS_REL_THRESHOLD: f64 = 1e-12;

/// A 1-D log density renormalized to integrate to one over `[lower, upper]`.
pub struct Renormalized1d<F: Fn(f64) -> f64> {
    logdens: F,
    /// `log integral exp(logdens)` over the bounds: the total mass of the raw
    /// approximation before renormalization.
    pub log_norm_const: f64,
    /// Set when the raw density at either bound exceeds
    /// [`ENDPOINT_MASS_REL_THRESHOLD`] times its interior maximum.
    pub endpoint_mass_warning: bool,
    pub quadrature: QuadResult,
}

impl<F: Fn(f64) -> f64> Renormalized1d<F> {
    pub fn log_density(&self, x: f64) -> f64 {
        (self.logdens)(x) - self.log_norm_const
    }
}

/// Integrate `exp(logdens)` over `[lower, upper]` with the adaptive rule and
/// return the renormalized density. `scan_points` controls the initial grid
/// used to locate the interior maximum for stable exponentiation.
pub fn renormalize_1d<F: Fn(f64) -> f64>(
    logdens: F,
    lower: f64,
    upper: f64,
    scan_points: usize,
    quad_opts: &QuadOptions,
) -> Result<Renormalized1d<F>> {
    if !(lower < upper) {
        return Err(Error::Invalid(format!(
            "bad renormalization bounds [{lower}, {upper}]"
        )));
    }
    let scan = scan_points.max(3);
    let mut peak = f64::NEG_INFINITY;
    for i in 0..scan {
        let x = lower + (upper - lower) * i as f64 / (scan - 1) as f64;
        peak = peak.max(logdens(x));
    }
    if !peak.is_finite() {
        return Err(Error::Invalid(
            "log density non-finite over the whole scan grid".into(),
        ));
    }
    let shifted = |x: f64| {
        let v = logdens(x) - peak;
        if v.is_finite() {
            v.exp()
        } else {
            0.0
        }
    };
    let quadrature = quad::integrate(&shifted, lower, upper, quad_opts)?;
    let log_norm_const = quadrature.value.ln() + peak;
    let endpoint_mass_warning = [lower, upper]
        .iter()
        .any(|&x| logdens(x) - peak > ENDPOINT_MASS_REL_THRESHOLD.ln());
    Ok(Renormalized1d {
        logdens,
        log_norm_const,
        endpoint_mass_warning,
        quadrature,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::reference::{GammaCgf, NormalCgf};
    use approx::assert_relative_eq;

    fn opts() -> SaddleOptions {
        SaddleOptions::default()
    }

    #[test]
    fn gamma_saddle_closed_form() {
        let g = GammaCgf::new(4.0).unwrap();
        let s = DVector::from_element(1, 8.0);
        let r = solve_saddle(&g, &s, None, &opts()).unwrap();
        assert_relative_eq!(r.t_hat[0], 0.5, epsilon = 1e-10);

        let at_mean = solve_saddle(&g, &DVector::from_element(1, 4.0), None, &opts()).unwrap();
        assert!(at_mean.t_hat[0].abs() < 1e-10);
    }

    #[test]
    fn normal_saddle_is_linear_solve() {
        // K = (n/2) t't with n = 4: saddle at s/4
        let n = NormalCgf::iid(2, 4.0).unwrap();
        let s = DVector::from_vec(vec![2.0, -1.0]);
        let r = solve_saddle(&n, &s, None, &opts()).unwrap();
        assert_relative_eq!(r.t_hat[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(r.t_hat[1], -0.25, epsilon = 1e-12);
    }

    #[test]
    fn standard_normal_density_at_zero() {
        let n = NormalCgf::iid(1, 1.0).unwrap();
        let d = saddlepoint_log_density(&n, &DVector::zeros(1), &opts()).unwrap();
        assert_relative_eq!(d, -0.5 * LN_2PI, epsilon = 1e-12);
    }

    #[test]
    fn normal_family_exact_in_any_dimension() {
        for p in [1usize, 3, 10] {
            let cgf = NormalCgf::random_spd(p, 90 + p as u64);
            let s = cgf.mean() + DVector::from_fn(p, |i, _| 0.3 * (i as f64 + 1.0) / p as f64);
            let approx = saddlepoint_log_density(&cgf, &s, &opts()).unwrap();
            let exact = cgf.exact_log_density(&s);
            assert_relative_eq!((approx - exact).exp(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn gamma_unit_shape_ratio_is_stirling_constant() {
        // exact Exp(1) at s = 1 is e^-1; the approximation misses by the n = 1
        // Stirling factor
        let g = GammaCgf::new(1.0).unwrap();
        let d = saddlepoint_log_density(&g, &DVector::from_element(1, 1.0), &opts()).unwrap();
        let ratio = (-1.0f64 - d).exp();
        assert_relative_eq!(ratio, 0.9221370088957891, epsilon = 1e-10);
    }

    #[test]
    fn gamma_ratio_constant_across_grid() {
        let g = GammaCgf::new(2.0).unwrap();
        let exact = |s: f64| s.ln() - s; // Gamma(2,1): s e^-s, log = ln s - s - ln Gamma(2)
        let mut ratios = Vec::new();
        for i in 0..10 {
            let s = 1.0 + 0.5 * i as f64;
            let d = saddlepoint_log_density(&g, &DVector::from_element(1, s), &opts()).unwrap();
            ratios.push((exact(s) - d).exp());
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let sd =
            (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / ratios.len() as f64).sqrt();
        assert!(sd / mean < 1e-10, "relative sd {}", sd / mean);
        assert_relative_eq!(mean, 0.9595021757444916, epsilon = 1e-10);
    }

    struct SeparablePair {
        a: GammaCgf,
        b: GammaCgf,
    }
    impl CumulantModel for SeparablePair {
        fn dim_p(&self) -> usize {
            2
        }
        fn sample_n(&self) -> usize {
            self.a.sample_n() + self.b.sample_n()
        }
        fn k_eval(&self, t: &DVector<f64>) -> f64 {
            self.a.k_eval(&DVector::from_element(1, t[0]))
                + self.b.k_eval(&DVector::from_element(1, t[1]))
        }
        fn k_grad(&self, t: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![
                self.a.k_grad(&DVector::from_element(1, t[0]))[0],
                self.b.k_grad(&DVector::from_element(1, t[1]))[0],
            ])
        }
        fn k_hess(&self, t: &DVector<f64>) -> DMatrix<f64> {
            let mut h = DMatrix::zeros(2, 2);
            h[(0, 0)] = self.a.k_hess(&DVector::from_element(1, t[0]))[(0, 0)];
            h[(1, 1)] = self.b.k_hess(&DVector::from_element(1, t[1]))[(0, 0)];
            h
        }
        fn in_domain(&self, t: &DVector<f64>) -> bool {
            t[0] < 1.0 && t[1] < 1.0
        }
    }

    #[test]
    fn double_saddle_on_independent_components_is_marginal() {
        // conditioning on an independent block must not change the answer
        let pair = SeparablePair {
            a: GammaCgf::new(3.0).unwrap(),
            b: GammaCgf::new(5.0).unwrap(),
        };
        let s1 = 2.4;
        let s2 = DVector::from_element(1, 6.0);
        let cond = double_saddle_log_conditional(&pair, s1, &s2, &opts()).unwrap();
        let marginal =
            saddlepoint_log_density(&pair.a, &DVector::from_element(1, s1), &opts()).unwrap();
        assert_relative_eq!(cond.log_cond_density, marginal, epsilon = 1e-12);
        assert!(cond.residual_full <= 1e-10 * (1.0 + (s1 * s1 + 36.0).sqrt()));
        assert!(cond.residual_nuisance <= 1e-10 * 7.0);
    }

    #[test]
    fn saddle_stagnates_outside_mean_range() {
        // Gamma means are positive: a negative target cannot be matched
        let g = GammaCgf::new(2.0).unwrap();
        let r = solve_saddle(&g, &DVector::from_element(1, -5.0), None, &opts());
        assert!(matches!(
            r,
            Err(Error::MaxIterations { .. }) | Err(Error::DomainEscape { .. })
        ));
    }

    #[test]
    fn init_outside_domain_is_domain_escape() {
        let g = GammaCgf::new(2.0).unwrap();
        let init = DVector::from_element(1, 2.0);
        let r = solve_saddle(&g, &DVector::from_element(1, 3.0), Some(&init), &opts());
        assert!(matches!(r, Err(Error::DomainEscape { .. })));
    }

    #[test]
    fn renormalize_recovers_gaussian_constant() {
        let r =
            renormalize_1d(|x| -0.5 * x * x, -40.0, 40.0, 201, &QuadOptions::default()).unwrap();
        assert_relative_eq!(r.log_norm_const, 0.5 * LN_2PI, epsilon = 1e-10);
        assert_relative_eq!(
            r.log_density(0.3),
            -0.5 * 0.09 - 0.5 * LN_2PI,
            epsilon = 1e-10
        );
        assert!(!r.endpoint_mass_warning);
    }

    #[test]
    fn renormalize_gamma_saddlepoint_gives_exact_exponential() {
        // shape 1: renormalization removes the constant Stirling factor exactly
        let g = GammaCgf::new(1.0).unwrap();
        let o = opts();
        let raw =
            move |s: f64| saddlepoint_log_density(&g, &DVector::from_element(1, s), &o).unwrap();
        let r = renormalize_1d(raw, 1e-12, 45.0, 400, &QuadOptions::default()).unwrap();
        for s in [0.2, 0.7, 1.5, 3.0, 6.0] {
            assert_relative_eq!((r.log_density(s) - (-s)).exp(), 1.0, epsilon = 1e-8);
        }
        // the raw density is exp(-s) divided by the Stirling constant, so the
        // raw mass is its reciprocal e / sqrt(2 pi); renormalizing restores 1
        assert_relative_eq!(r.log_norm_const.exp(), 1.0844375514158622, epsilon = 1e-6);
        assert!(
            r.endpoint_mass_warning,
            "support endpoint carries density ~1"
        );
    }

    #[test]
    fn renormalize_is_idempotent() {
        let g = GammaCgf::new(3.0).unwrap();
        let o = opts();
        let raw =
            move |s: f64| saddlepoint_log_density(&g, &DVector::from_element(1, s), &o).unwrap();
        let first = renormalize_1d(raw, 1e-6, 60.0, 400, &QuadOptions::default()).unwrap();
        let second = renormalize_1d(
            |s| first.log_density(s),
            1e-6,
            60.0,
            400,
            &QuadOptions::default(),
        )
        .unwrap();
        assert!(second.log_norm_const.abs() < 1e-10);
    }

    #[test]
    fn translation_equivariance_under_tilting() {
        // K_a(t) = K(t) + a't is the CGF of X + a; densities must shift exactly
        struct Shifted<'c> {
            inner: &'c GammaCgf,
            a: f64,
        }
        impl CumulantModel for Shifted<'_> {
            fn dim_p(&self) -> usize {
                1
            }
            fn sample_n(&self) -> usize {
                self.inner.sample_n()
            }
            fn k_eval(&self, t: &DVector<f64>) -> f64 {
                self.inner.k_eval(t) + self.a * t[0]
            }
            fn k_grad(&self, t: &DVector<f64>) -> DVector<f64> {
                self.inner.k_grad(t).add_scalar(self.a)
            }
            fn k_hess(&self, t: &DVector<f64>) -> DMatrix<f64> {
                self.inner.k_hess(t)
            }
            fn in_domain(&self, t: &DVector<f64>) -> bool {
                self.inner.in_domain(t)
            }
        }
        let base = GammaCgf::new(2.5).unwrap();
        for (a, s) in [(1.0, 2.0), (-0.7, 3.3), (12.5, 1.1)] {
            let shifted = Shifted { inner: &base, a };
            let lhs = saddlepoint_log_density(&shifted, &DVector::from_element(1, s + a), &opts())
                .unwrap();
            let rhs =
                saddlepoint_log_density(&base, &DVector::from_element(1, s), &opts()).unwrap();
            assert_relative_eq!(lhs, rhs, epsilon = 1e-10);
        }
    }
}
