//! Conditional density of the first exponential-means group sum given the
//! total, by the ratio of saddlepoint approximations (full statistic over
//! conditioning block), renormalized to unit mass on the support. The
//! two-group null conditional is a scaled Beta(m, m), so every grid point has
//! an exact reference. The recorded cell is the worst of a fixed interior
//! grid of evaluation points.

use densapprox::models::expmeans::ExponentialMeansModel;
use densapprox::quad::QuadOptions;
use densapprox::saddlepoint::{double_saddle_log_conditional, renormalize_1d, SaddleOptions};
use nalgebra::DVector;

use crate::config::{ExperimentConfig, ModelConfig, OracleConfig};
use crate::experiments::{Artifact, Experiment};
use crate::runner::{grid, run_cells, Cell, CellValue};
use crate::CliError;

/// Interior evaluation points `u_1 = total * i / (GRID_POINTS + 1)`.
const GRID_POINTS: usize = 50;
/// Renormalization bounds clip `[eps * total, (1 - eps) * total]`; the Beta
/// density carries negligible mass outside for every bundled `m`.
const SUPPORT_CLIP: f64 = 1e-4;
/// Initial scan grid handed to the renormalizer to locate the density peak.
const SCAN_POINTS: usize = 400;

pub struct DoubleSaddle;

impl Experiment for DoubleSaddle {
    fn tag(&self) -> &'static str {
        "double-saddle"
    }

    fn run(&self, cfg: &ExperimentConfig, threads: usize) -> Result<Artifact, CliError> {
        let groups = match cfg.model {
            ModelConfig::ExpMeans { groups } => groups,
            _ => {
                return Err(CliError::Config(format!(
                    "double-saddle runs on the exp-means model, got '{}'",
                    cfg.model.tag()
                )))
            }
        };
        if groups != 2 {
            return Err(CliError::Config(
                "double-saddle needs exactly two groups: the exact conditional is the scaled beta"
                    .into(),
            ));
        }
        if !matches!(cfg.oracle, OracleConfig::ClosedForm) {
            return Err(CliError::Config(
                "double-saddle compares against the exact conditional; use the closed-form oracle"
                    .into(),
            ));
        }
        crate::experiments::validate_exp_means_grid(cfg, groups)?;
        let cells = grid(cfg);
        let records = run_cells(&cells, threads, "double-saddle", run_cell);
        Ok(Artifact::Scaling(super::laplace_scaling::assemble(
            records, None,
        )))
    }
}

fn run_cell(cell: &Cell) -> densapprox::Result<CellValue> {
    let model =
        ExponentialMeansModel::simulate(2, cell.n / 2, &DVector::from_element(2, 1.0), cell.seed)?;
    let total = model.observed_sums().sum();
    let cgf = model.partial_sum_cgf();
    let opts = SaddleOptions::default();
    // Solver failures map to zero density: the renormalizer treats
    // non-finite log values as mass-free points.
    let raw = |u1: f64| {
        double_saddle_log_conditional(&cgf, u1, &DVector::from_element(1, total), &opts)
            .map(|r| r.log_cond_density)
            .unwrap_or(f64::NEG_INFINITY)
    };
    let renorm = renormalize_1d(
        raw,
        SUPPORT_CLIP * total,
        (1.0 - SUPPORT_CLIP) * total,
        SCAN_POINTS,
        &QuadOptions::default(),
    )?;

    let mut worst: Option<(f64, CellValue)> = None;
    for i in 1..=GRID_POINTS {
        let u1 = total * i as f64 / (GRID_POINTS + 1) as f64;
        let log_approx = renorm.log_density(u1);
        let log_oracle = model.exact_conditional_log_density(u1, total)?;
        let rel = ((log_approx - log_oracle).exp() - 1.0).abs();
        if worst.as_ref().map_or(true, |(w, _)| rel > *w) {
            worst = Some((
                rel,
                CellValue {
                    log_approx,
                    log_oracle,
                    oracle_se: 0.0,
                },
            ));
        }
    }
    Ok(worst.expect("grid is nonempty").1)
}
