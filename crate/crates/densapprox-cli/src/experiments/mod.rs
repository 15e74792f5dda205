//! The experiment registry. Each experiment is a strategy selected by tag at
//! runtime: it interprets the shared config, runs the grid, and returns an
//! artifact (CSV-shaped scaling run or JSON report).

use densapprox::laplace::ModeResult;
use densapprox::model::LogTargetModel;
use densapprox::models::glm::simulate_glm;
use densapprox::models::logistic::simulate_logistic;
use densapprox::models::{
    ExponentialMeansModel, GlmModel, LogisticRegressionModel, QuadraticModel, StirlingFamily,
};
use densapprox::oracle::{importance_log_normalizer, quadrature_log_normalizer, OracleEstimate};
use densapprox::quad::QuadOptions;
use densapprox::Error;
use nalgebra::DVector;
use serde_json::Value;

use crate::config::{ExperimentConfig, ModelConfig, OracleConfig};
use crate::output::ScalingRun;
use crate::runner::Cell;
use crate::CliError;

pub mod diagnose;
pub mod double_saddle;
pub mod laplace_scaling;
pub mod marginal;
pub mod saddlepoint_exactness;

pub enum Artifact {
    /// Cell grid destined for the CSV contract.
    Scaling(ScalingRun),
    /// JSON document (assumption audits).
    Json { value: Value, had_errors: bool },
}

impl Artifact {
    pub fn any_cell_failed(&self) -> bool {
        match self {
            Artifact::Scaling(run) => run.any_cell_failed(),
            Artifact::Json { had_errors, .. } => *had_errors,
        }
    }

    pub fn summary(&self) -> String {
        match self {
            Artifact::Scaling(run) => run.summary(),
            Artifact::Json { value, had_errors } => {
                let cells = value.as_array().map_or(0, Vec::len);
                format!("{cells} audit reports (errors: {had_errors})")
            }
        }
    }
}

pub trait Experiment: Sync {
    /// Tag used as the subcommand and the config's `experiment` field.
    fn tag(&self) -> &'static str;
    fn run(&self, cfg: &ExperimentConfig, threads: usize) -> Result<Artifact, CliError>;
}

pub static REGISTRY: &[&dyn Experiment] = &[
    &laplace_scaling::LaplaceScaling,
    &marginal::MarginalLaplace,
    &saddlepoint_exactness::SaddlepointExactness,
    &double_saddle::DoubleSaddle,
    &diagnose::Diagnose,
];

pub fn find_experiment(tag: &str) -> Option<&'static dyn Experiment> {
    REGISTRY.iter().copied().find(|e| e.tag() == tag)
}

/// A simulated log-target model ready for mode finding. `closed_form` holds
/// the exact mode-shifted log normalizer when the family has one.
pub(crate) struct BuiltTarget {
    pub model: Box<dyn LogTargetModel>,
    pub init: DVector<f64>,
    pub closed_form: Option<f64>,
}

/// Simulate the configured model for one cell. Only log-target families are
/// accepted here; the CGF-only families belong to the saddlepoint
/// experiments.
pub(crate) fn build_log_target(
    model_cfg: &ModelConfig,
    cell: &Cell,
) -> densapprox::Result<BuiltTarget> {
    match *model_cfg {
        ModelConfig::Logistic { prior_sd } => {
            let sim = simulate_logistic(cell.n, cell.p, &DVector::zeros(cell.p), cell.seed)?;
            let model = if prior_sd == 1.0 {
                sim
            } else {
                LogisticRegressionModel::new(sim.x().clone(), sim.y().clone(), prior_sd)?
            };
            Ok(BuiltTarget {
                model: Box::new(model),
                init: DVector::zeros(cell.p),
                closed_form: None,
            })
        }
        ModelConfig::Glm { family, prior_sd } => {
            let family = family.into();
            // the canonical exponential family needs x' beta0 < 0; a single
            // negative coordinate keeps the rejection rate at one half
            let beta0 = match family {
                densapprox::models::GlmFamily::Exponential => {
                    let mut b = DVector::zeros(cell.p);
                    b[0] = -1.0;
                    b
                }
                _ => DVector::zeros(cell.p),
            };
            let (sim, _rejections) = simulate_glm(family, cell.n, cell.p, &beta0, cell.seed)?;
            let model = if prior_sd == 1.0 {
                sim
            } else {
                GlmModel::new(sim.x().clone(), sim.y().clone(), family, prior_sd)?
            };
            Ok(BuiltTarget {
                model: Box::new(model),
                init: beta0,
                closed_form: None,
            })
        }
        ModelConfig::GaussianConjugate => {
            let model = QuadraticModel::random_spd(cell.p, cell.n, cell.seed);
            let exact = model.exact_log_normalizer();
            Ok(BuiltTarget {
                model: Box::new(model),
                init: DVector::zeros(cell.p),
                closed_form: Some(exact),
            })
        }
        ModelConfig::Stirling => {
            if cell.p != 1 {
                return Err(Error::Invalid(
                    "the stirling family is one-dimensional; use a fixed p rule with p = 1".into(),
                ));
            }
            let model = StirlingFamily::new(cell.n as f64)?;
            let exact = model.log_true_normalizer();
            Ok(BuiltTarget {
                model: Box::new(model),
                init: DVector::zeros(1),
                closed_form: Some(exact),
            })
        }
        ModelConfig::ExpMeans { groups } => {
            if cell.p != groups {
                return Err(Error::Invalid(format!(
                    "exp-means with {groups} groups has parameter dimension {groups}; fix p = {groups}"
                )));
            }
            if cell.n % groups != 0 || cell.n / groups == 0 {
                return Err(Error::Invalid(format!(
                    "exp-means needs n divisible into {groups} equal groups, got n = {}",
                    cell.n
                )));
            }
            let model = ExponentialMeansModel::simulate(
                groups,
                cell.n / groups,
                &DVector::from_element(groups, 1.0),
                cell.seed,
            )?;
            // increments start at zero; the base rate starts at the truth
            let mut init = DVector::zeros(groups);
            init[groups - 1] = 1.0;
            Ok(BuiltTarget {
                model: Box::new(model),
                init,
                closed_form: None,
            })
        }
        ModelConfig::GammaCgf | ModelConfig::NormalCgf | ModelConfig::ExpRegression => {
            Err(Error::Invalid(format!(
                "model '{}' has no log target; it is served by the saddlepoint experiments",
                model_cfg.tag()
            )))
        }
    }
}

/// Fail-fast grid check for the grouped-exponential family: every n must
/// split into `groups` equal groups and the parameter dimension is `groups`.
pub(crate) fn validate_exp_means_grid(
    cfg: &ExperimentConfig,
    groups: usize,
) -> Result<(), CliError> {
    if let Some(&n) = cfg
        .n_grid
        .iter()
        .find(|&&n| n % groups != 0 || n / groups == 0)
    {
        return Err(CliError::Config(format!(
            "exp-means with {groups} groups needs every n divisible by {groups}, got {n}"
        )));
    }
    match cfg.p_rule {
        crate::config::PRule::Fixed { p } if p == groups => Ok(()),
        _ => Err(CliError::Config(format!(
            "exp-means has parameter dimension {groups}; set p_rule to fixed p = {groups}"
        ))),
    }
}

/// Evaluate the configured oracle for the mode-shifted log normalizer.
pub(crate) fn oracle_log_normalizer(
    oracle: &OracleConfig,
    model: &dyn LogTargetModel,
    mode: &ModeResult,
    closed_form: Option<f64>,
    seed: u64,
) -> densapprox::Result<OracleEstimate> {
    match *oracle {
        OracleConfig::Quadrature { half_width_sds } => {
            quadrature_log_normalizer(model, mode, half_width_sds, &QuadOptions::default())
        }
        OracleConfig::ImportanceSampling { draws, scale } => {
            importance_log_normalizer(model, mode, draws, scale, seed)
        }
        OracleConfig::ClosedForm => closed_form.map(OracleEstimate::exact).ok_or_else(|| {
            Error::Invalid("no closed-form normalizer for this model; use another oracle".into())
        }),
    }
}
