//! Bundled statistical models: closed-form references plus the regression and
//! grouped-exponential families used by the experiment harness.

pub mod expmeans;
pub mod expreg;
pub mod glm;
pub mod logistic;
pub mod reference;

pub use expmeans::{ExponentialMeansModel, PartialSumCgf};
pub use expreg::ExponentialRegressionCgf;
pub use glm::{GlmFamily, GlmModel, MeanParametrizedGlm};
pub use logistic::LogisticRegressionModel;
pub use reference::{GammaCgf, NormalCgf, QuadraticModel, StirlingFamily};

use nalgebra::{DMatrix, DVector};

/// Render a design matrix and response vector as CSV with columns
/// `x_1, ..., x_p, y`. Floats are written with 17 significant digits so the
/// file parses back to the same bits.
pub fn dataset_csv(x: &DMatrix<f64>, y: &DVector<f64>) -> String {
    assert_eq!(x.nrows(), y.len(), "design rows and responses disagree");
    let p = x.ncols();
    let mut out = String::new();
    for k in 0..p {
        out.push_str(&format!("x_{},", k + 1));
    }
    out.push_str("y\n");
    for j in 0..x.nrows() {
        for k in 0..p {
            out.push_str(&format!("{:.16e},", x[(j, k)]));
        }
        out.push_str(&format!("{:.16e}\n", y[j]));
    }
    out
}
