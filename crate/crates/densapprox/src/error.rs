//! Error type shared across the approximation engines and oracles.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Newton iteration hit the cap without meeting the gradient/residual tolerance.
    #[error(
        "no convergence after {iters} iterations (residual {residual:.3e}, tolerance {tol:.3e})"
    )]
    MaxIterations {
        iters: usize,
        residual: f64,
        tol: f64,
    },

    /// The negated Hessian could not be factorized even after the jitter ladder;
    /// the target is not locally concave at the iterate.
    #[error("negated Hessian is not positive definite (last jitter {jitter:.3e})")]
    IndefiniteCurvature { jitter: f64 },

    /// Saddlepoint iterates could not be kept inside the cumulant domain; usually
    /// means the requested point lies outside the mean range of the statistic.
    #[error("cannot keep saddlepoint iterates inside the cumulant domain (after {halvings} step halvings)")]
    DomainEscape { halvings: usize },

    /// Tensor-product quadrature is only offered at desk scale.
    #[error("quadrature oracle supports dimension <= {max}, got {dim}")]
    DimensionTooLarge { dim: usize, max: usize },

    /// Adaptive quadrature exhausted its interval budget before the tolerance held.
    #[error("quadrature tolerance not reached: estimated error {error:.3e} > {tol:.3e} after {intervals} intervals")]
    ToleranceNotReached {
        error: f64,
        tol: f64,
        intervals: usize,
    },

    /// Importance weights collapsed onto too few draws to trust the estimate.
    #[error("importance weights degenerate: effective sample size {ess:.1} < {min_ess:.1}")]
    DegenerateWeights { ess: f64, min_ess: f64 },

    /// Scaling fits need spread in both n and p to identify the exponents.
    #[error("insufficient spread for scaling fit: {0}")]
    InsufficientSpread(String),

    /// A point outside the support of the requested closed-form density.
    #[error("point outside support: {0}")]
    OutOfSupport(String),

    /// The mean-to-canonical inverse map failed to converge.
    #[error("inverse of the mean parametrization diverged after {iters} iterations (residual {residual:.3e})")]
    InverseMapDiverged { iters: usize, residual: f64 },

    /// A model evaluation returned NaN/inf where a finite value was required.
    #[error("non-finite evaluation at coordinate {coord} (value {value})")]
    NonFiniteEval { coord: usize, value: f64 },

    /// Mismatched dimensions or otherwise invalid arguments.
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
