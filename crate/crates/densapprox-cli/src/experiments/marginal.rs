//! Marginal-Laplace accuracy on the two-group exponential-means rate
//! increment. Per cell: simulate the model, sweep the interest coordinate
//! over a grid around its fitted value, and compare the marginal Laplace log
//! density against a quadrature reference (profile integral over the
//! nuisance rate divided by the full two-dimensional normalizer). The
//! recorded cell is the worst grid point.

use densapprox::diagnostics::{RatePrediction, RateSource, AUDIT_HORIZON_ZETA};
use densapprox::laplace::{
    constrained_mode, find_mode, marginal_laplace_from_parts, NewtonOptions,
};
use densapprox::model::LogTargetModel;
use densapprox::models::expmeans::ExponentialMeansModel;
use densapprox::oracle::quadrature_log_normalizer;
use densapprox::quad::{integrate, QuadOptions};
use nalgebra::DVector;

use crate::config::{ExperimentConfig, ModelConfig, OracleConfig};
use crate::experiments::{Artifact, Experiment};
use crate::runner::{grid, run_cells, Cell, CellValue};
use crate::CliError;

/// Evaluation points for the interest coordinate, spanning the fitted value
/// plus/minus [`PSI_GRID_SDS`] fitted standard deviations.
const PSI_GRID_POINTS: usize = 11;
const PSI_GRID_SDS: f64 = 2.0;

pub struct MarginalLaplace;

impl Experiment for MarginalLaplace {
    fn tag(&self) -> &'static str {
        "marginal"
    }

    fn run(&self, cfg: &ExperimentConfig, threads: usize) -> Result<Artifact, CliError> {
        let groups = match cfg.model {
            ModelConfig::ExpMeans { groups } => groups,
            _ => {
                return Err(CliError::Config(format!(
                    "marginal runs on the exp-means model, got '{}'",
                    cfg.model.tag()
                )))
            }
        };
        if groups != 2 {
            return Err(CliError::Config(
                "marginal needs exactly two groups: the reference integrates a scalar nuisance"
                    .into(),
            ));
        }
        crate::experiments::validate_exp_means_grid(cfg, groups)?;
        let half_width_sds =
            match cfg.oracle {
                OracleConfig::Quadrature { half_width_sds } => half_width_sds,
                _ => return Err(CliError::Config(
                    "marginal needs the quadrature oracle: the reference is a ratio of integrals"
                        .into(),
                )),
            };
        let cells = grid(cfg);
        let records = run_cells(&cells, threads, "marginal-laplace", |cell| {
            run_cell(cell, half_width_sds)
        });
        let prediction = RatePrediction::from_source(RateSource::MarginalExpFamily {
            zeta: AUDIT_HORIZON_ZETA,
            c3: 1.0,
        })
        .expect("bundled rate source is valid");
        Ok(Artifact::Scaling(super::laplace_scaling::assemble(
            records,
            Some(prediction),
        )))
    }
}

fn run_cell(cell: &Cell, half_width_sds: f64) -> densapprox::Result<CellValue> {
    let model =
        ExponentialMeansModel::simulate(2, cell.n / 2, &DVector::from_element(2, 1.0), cell.seed)?;
    let newton = NewtonOptions::default();
    let quad_opts = QuadOptions::default();
    let mode = find_mode(&model, &DVector::from_vec(vec![0.0, 1.0]), &newton)?;
    let g_hat = mode.g_at_mode;
    let denom = quadrature_log_normalizer(&model, &mode, half_width_sds, &quad_opts)?;

    let psi_hat = mode.theta_hat[0];
    let sd_psi = mode.fit_sds()[0];
    let mut worst: Option<(f64, CellValue)> = None;
    for i in 0..PSI_GRID_POINTS {
        let frac = i as f64 / (PSI_GRID_POINTS - 1) as f64;
        let psi = psi_hat + PSI_GRID_SDS * (2.0 * frac - 1.0) * sd_psi;
        let init = mode.theta_hat.clone().remove_row(0);
        let constrained = constrained_mode(&model, 0, psi, &init, &newton)?;
        let log_approx = marginal_laplace_from_parts(&mode, &constrained);

        // Profile integral over the nuisance rate, mode-shifted by the joint
        // maximum so the ratio against `denom` is well scaled.
        let lambda_hat = constrained.nuisance_hat()[0];
        let sd_lambda = (-0.5 * constrained.log_det_neg_hess_nuisance).exp();
        let h = half_width_sds * sd_lambda;
        // both rates must stay positive: lambda > 0 and lambda + psi > 0
        let floor = 0f64.max(-psi) + 1e-12;
        let lo = (lambda_hat - h).max(floor);
        let f = |lambda: f64| {
            let v = model.eval(&DVector::from_vec(vec![psi, lambda]));
            let w = (v - g_hat).exp();
            if w.is_finite() {
                w
            } else {
                0.0
            }
        };
        let num = integrate(&f, lo, lambda_hat + h, &quad_opts)?;
        let log_oracle = num.value.ln() - denom.value;
        let rel = ((log_approx - log_oracle).exp() - 1.0).abs();
        if worst.as_ref().map_or(true, |(w, _)| rel > *w) {
            let oracle_se = num.abs_error / num.value + denom.std_error;
            worst = Some((
                rel,
                CellValue {
                    log_approx,
                    log_oracle,
                    oracle_se,
                },
            ));
        }
    }
    Ok(worst.expect("grid is nonempty").1)
}
