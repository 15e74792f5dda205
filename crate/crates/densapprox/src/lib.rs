//! Gaussian-at-the-mode density approximations and their verification tools.
//!
//! The crate approximates intractable densities in two dual ways:
//!
//! * **From a log target** `g(theta)`: Laplace approximation of the
//!   normalizing constant `integral exp(g)`, of the density itself, and of
//!   one-dimensional marginals through constrained modes ([`laplace`]).
//! * **From a cumulant generating function** `K(t)`: saddlepoint density of a
//!   sample statistic and the double-saddlepoint conditional density, with
//!   optional one-dimensional renormalization ([`saddlepoint`]).
//!
//! Everything is scored against independent references ([`oracle`]): adaptive
//! quadrature in up to three dimensions, importance sampling above that, and
//! closed forms where a family admits them. [`diagnostics`] audits the
//! curvature and derivative-growth conditions behind the expected error rates
//! and fits empirical scaling exponents in `(n, p)`.
//!
//! Models plug in through two small traits ([`model::LogTargetModel`],
//! [`model::CumulantModel`]); ready-made regression and exponential-family
//! instances live in [`models`].

pub mod diagnostics;
pub mod error;
pub mod laplace;
pub mod linalg;
pub mod model;
pub mod models;
pub mod oracle;
pub mod quad;
pub mod saddlepoint;

pub use error::{Error, Result};
