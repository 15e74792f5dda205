//! Joint-normalizer scaling: per cell, simulate the model, find the mode,
//! and compare the Laplace log normalizer against the configured oracle.
//! After the grid, fit `log error ~ a log p + b log n` (given spread in both)
//! and the plain n-exponent (given spread in n), and attach the theoretical
//! rate envelope where the model has one.

use densapprox::diagnostics::{fit_log_n_exponent, fit_scaling, RatePrediction, RateSource};
use densapprox::laplace::{find_mode, laplace_log_normalizer, NewtonOptions};

use crate::config::{ExperimentConfig, ModelConfig};
use crate::experiments::{build_log_target, oracle_log_normalizer, Artifact, Experiment};
use crate::output::{NExponentFit, ScalingRun};
use crate::runner::{derive_stream, grid, run_cells, Cell, CellValue};
use crate::CliError;

/// Stream label decorrelating oracle draws from the cell's data draws.
const ORACLE_STREAM: u64 = 0x6f7261636c65; // "oracle"

pub struct LaplaceScaling;

impl Experiment for LaplaceScaling {
    fn tag(&self) -> &'static str {
        "laplace-scaling"
    }

    fn run(&self, cfg: &ExperimentConfig, threads: usize) -> Result<Artifact, CliError> {
        match cfg.model {
            ModelConfig::GammaCgf | ModelConfig::NormalCgf | ModelConfig::ExpRegression => {
                return Err(CliError::Config(format!(
                    "laplace-scaling needs a log-target model, got '{}'",
                    cfg.model.tag()
                )))
            }
            ModelConfig::ExpMeans { groups } => {
                crate::experiments::validate_exp_means_grid(cfg, groups)?
            }
            _ => {}
        }
        let cells = grid(cfg);
        let records = run_cells(&cells, threads, "laplace", |cell| run_cell(cfg, cell));
        Ok(Artifact::Scaling(assemble(
            records,
            prediction_for(&cfg.model),
        )))
    }
}

fn run_cell(cfg: &ExperimentConfig, cell: &Cell) -> densapprox::Result<CellValue> {
    let target = build_log_target(&cfg.model, cell)?;
    let mode = find_mode(
        target.model.as_ref(),
        &target.init,
        &NewtonOptions::default(),
    )?;
    let log_approx = laplace_log_normalizer(&mode);
    let oracle = oracle_log_normalizer(
        &cfg.oracle,
        target.model.as_ref(),
        &mode,
        target.closed_form,
        derive_stream(cell.seed, ORACLE_STREAM),
    )?;
    Ok(CellValue {
        log_approx,
        log_oracle: oracle.value,
        oracle_se: oracle.std_error,
    })
}

fn prediction_for(model: &ModelConfig) -> Option<RatePrediction> {
    let source = match model {
        ModelConfig::Logistic { .. } => RateSource::LogisticJoint,
        ModelConfig::Glm { .. } => RateSource::GlmJoint,
        _ => return None,
    };
    Some(RatePrediction::from_source(source).expect("bundled rate sources are valid"))
}

/// Shared assembly: attach whichever exponent fits the surviving cells
/// identify.
pub(crate) fn assemble(
    cells: Vec<crate::output::CellRecord>,
    prediction: Option<RatePrediction>,
) -> ScalingRun {
    let mut run = ScalingRun {
        cells,
        fitted: None,
        n_exponent: None,
        prediction,
    };
    let fit_cells = run.fit_cells();
    run.fitted = fit_scaling(&fit_cells).ok();
    let n_cells: Vec<(usize, f64)> = fit_cells.iter().map(|&(n, _, e)| (n, e)).collect();
    run.n_exponent = fit_log_n_exponent(&n_cells)
        .ok()
        .map(|(slope, std_error)| NExponentFit { slope, std_error });
    run
}
