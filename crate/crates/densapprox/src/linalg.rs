//! Small dense linear-algebra helpers shared by the engines: jittered Cholesky,
//! log-determinants, symmetric eigen extremes, inverse square roots.
//!
//! Everything here is desk-scale (dense nalgebra); the jitter ladder mirrors the
//! usual practice for barely-indefinite curvature matrices: start at
//! `1e-10 * mean(|diag|)`, grow by 10x, give up at `1e-2 * mean(|diag|)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub const JITTER_INITIAL_REL: f64 = 1e-10;
pub const JITTER_MAX_REL: f64 = 1e-2;
pub const JITTER_GROWTH: f64 = 10.0;

/// Force exact symmetry; engines call this before factorizing model Hessians.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

/// Cholesky of a symmetric positive-definite matrix with an adaptive diagonal
/// jitter ladder. Returns the factorization and the jitter that was needed
/// (0.0 when the clean matrix factorizes).
pub fn cholesky_with_jitter(m: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Ok((chol, 0.0));
    }
    let p = m.nrows();
    let mean_diag = m.diagonal().iter().map(|d| d.abs()).sum::<f64>() / p.max(1) as f64;
    let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let mut jitter = JITTER_INITIAL_REL * scale;
    let cap = JITTER_MAX_REL * scale;
    while jitter <= cap {
        let jittered = m + DMatrix::identity(p, p) * jitter;
        if let Some(chol) = Cholesky::new(jittered) {
            return Ok((chol, jitter));
        }
        jitter *= JITTER_GROWTH;
    }
    Err(Error::IndefiniteCurvature { jitter: cap })
}

/// `log det` of a positive-definite matrix given its Cholesky factor.
pub fn log_det_from_cholesky(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| d.ln())
        .sum::<f64>()
}

/// Strict log-determinant: fails (no jitter) when the matrix is not PD.
pub fn log_det_pd(m: &DMatrix<f64>) -> Result<f64> {
    let chol = Cholesky::new(symmetrize(m)).ok_or(Error::IndefiniteCurvature { jitter: 0.0 })?;
    Ok(log_det_from_cholesky(&chol))
}

/// Extreme eigenvalues (min, max) of a symmetric matrix. Full decomposition at
/// desk scale; deterministic power/shifted-power iteration above it, so audits
/// of wide models stay tractable.
pub fn extreme_eigenvalues(m: &DMatrix<f64>) -> (f64, f64) {
    const FULL_EIGEN_MAX_DIM: usize = 200;
    let sym = symmetrize(m);
    if sym.nrows() <= FULL_EIGEN_MAX_DIM {
        let eig = sym.symmetric_eigenvalues();
        (eig.min(), eig.max())
    } else {
        lanczos_extremes(&sym, 400)
    }
}

/// Lanczos tridiagonalization with full reorthogonalization and a fixed,
/// slightly asymmetric start vector (deterministic). Exact when the step
/// budget reaches the dimension; extreme Ritz values otherwise, which is
/// where Lanczos converges first.
fn lanczos_extremes(sym: &DMatrix<f64>, max_steps: usize) -> (f64, f64) {
    let p = sym.nrows();
    let steps = max_steps.min(p);
    let mut q = DVector::from_fn(p, |i, _| 1.0 + 0.01 * ((i + 1) as f64).sin());
    q /= q.norm();
    let mut basis: Vec<DVector<f64>> = vec![q];
    let mut alphas: Vec<f64> = Vec::with_capacity(steps);
    let mut betas: Vec<f64> = Vec::new();
    for j in 0..steps {
        let mut w = sym * &basis[j];
        alphas.push(basis[j].dot(&w));
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w -= c * b;
            }
        }
        let beta = w.norm();
        if j + 1 == steps || beta <= 1e-14 * alphas[j].abs().max(1.0) {
            break;
        }
        betas.push(beta);
        basis.push(w / beta);
    }
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = t.symmetric_eigenvalues();
    (eig.min(), eig.max())
}

/// Symmetric inverse square root via eigendecomposition. Fails if any
/// eigenvalue is non-positive.
pub fn inverse_sqrt_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = symmetrize(m).symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::IndefiniteCurvature { jitter: 0.0 });
    }
    let scaled = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        eig.eigenvectors[(i, j)] / eig.eigenvalues[j].sqrt()
    });
    Ok(&scaled * eig.eigenvectors.transpose())
}

/// Max-absolute-row-sum norm.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
