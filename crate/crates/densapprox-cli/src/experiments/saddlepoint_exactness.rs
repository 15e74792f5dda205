//! Saddlepoint densities on statistics whose true density is known in closed
//! form. The gamma family probes the Stirling-ratio defect (the raw
//! saddlepoint is exact after renormalization); the Gaussian family is exact
//! outright, which pins down solver and formula bugs to machine precision.
//!
//! Per cell, `n` sets the distribution (gamma shape, or per-coordinate
//! Gaussian variance) and the evaluation point is drawn from the cell seed.

use densapprox::models::reference::{GammaCgf, NormalCgf};
use densapprox::oracle::ClosedForm;
use densapprox::saddlepoint::{saddlepoint_log_density, SaddleOptions};
use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::{ExperimentConfig, ModelConfig, OracleConfig, PRule};
use crate::experiments::{Artifact, Experiment};
use crate::runner::{grid, run_cells, Cell, CellValue};
use crate::CliError;

pub struct SaddlepointExactness;

impl Experiment for SaddlepointExactness {
    fn tag(&self) -> &'static str {
        "saddlepoint-exactness"
    }

    fn run(&self, cfg: &ExperimentConfig, threads: usize) -> Result<Artifact, CliError> {
        if !matches!(cfg.oracle, OracleConfig::ClosedForm) {
            return Err(CliError::Config(
                "saddlepoint-exactness compares against exact densities; use the closed-form oracle"
                    .into(),
            ));
        }
        match cfg.model {
            ModelConfig::GammaCgf => {
                if !matches!(cfg.p_rule, PRule::Fixed { p: 1 }) {
                    return Err(CliError::Config(
                        "the gamma statistic is scalar; fix p at 1".into(),
                    ));
                }
            }
            ModelConfig::NormalCgf => {}
            _ => {
                return Err(CliError::Config(format!(
                    "saddlepoint-exactness runs on a CGF model, got '{}'",
                    cfg.model.tag()
                )))
            }
        }
        let cells = grid(cfg);
        let records = run_cells(&cells, threads, "saddlepoint", |cell| {
            run_cell(&cfg.model, cell)
        });
        Ok(Artifact::Scaling(super::laplace_scaling::assemble(
            records, None,
        )))
    }
}

fn run_cell(model: &ModelConfig, cell: &Cell) -> densapprox::Result<CellValue> {
    let mut rng = ChaCha8Rng::seed_from_u64(cell.seed);
    let opts = SaddleOptions::default();
    match model {
        ModelConfig::GammaCgf => {
            let shape = cell.n as f64;
            let cgf = GammaCgf::new(shape)?;
            // a bulk point: between 0.7 and 1.3 times the mean
            let s = shape * (0.7 + 0.6 * rng.random::<f64>());
            let log_approx = saddlepoint_log_density(&cgf, &DVector::from_element(1, s), &opts)?;
            let log_oracle = ClosedForm::Gamma { shape }.log_density(s)?;
            Ok(CellValue {
                log_approx,
                log_oracle,
                oracle_se: 0.0,
            })
        }
        ModelConfig::NormalCgf => {
            let cgf = NormalCgf::iid(cell.p, cell.n as f64)?;
            let sd = (cell.n as f64).sqrt();
            let s = DVector::from_fn(cell.p, |_, _| sd * rng.sample::<f64, _>(StandardNormal));
            let log_approx = saddlepoint_log_density(&cgf, &s, &opts)?;
            Ok(CellValue {
                log_approx,
                log_oracle: cgf.exact_log_density(&s),
                oracle_se: 0.0,
            })
        }
        _ => unreachable!("validated in run()"),
    }
}
