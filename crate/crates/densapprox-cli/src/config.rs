//! JSON experiment configuration. Field names are part of the interface;
//! unknown fields are rejected so typos fail fast instead of silently running
//! a default.

use std::fs;
use std::path::Path;

use densapprox::models::GlmFamily;
use densapprox::oracle::{DEFAULT_HALF_WIDTH_SDS, DEFAULT_PROPOSAL_SCALE};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must match the subcommand the config is run under.
    pub experiment: String,
    pub model: ModelConfig,
    pub n_grid: Vec<usize>,
    pub p_rule: PRule,
    pub replicates: usize,
    pub seed: u64,
    pub oracle: OracleConfig,
    /// Artifact path; the `--out` flag overrides it, stdout if neither is set.
    #[serde(default)]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Logistic {
        #[serde(default = "default_prior_sd")]
        prior_sd: f64,
    },
    Glm {
        family: GlmFamilyTag,
        #[serde(default = "default_prior_sd")]
        prior_sd: f64,
    },
    /// Quadratic log target with a random well-conditioned curvature.
    GaussianConjugate,
    /// 1-D family `g = n (theta - e^theta)`.
    Stirling,
    ExpMeans {
        #[serde(default = "default_groups")]
        groups: usize,
    },
    GammaCgf,
    NormalCgf,
    ExpRegression,
}

impl ModelConfig {
    pub fn tag(&self) -> &'static str {
        match self {
            ModelConfig::Logistic { .. } => "logistic",
            ModelConfig::Glm { .. } => "glm",
            ModelConfig::GaussianConjugate => "gaussian-conjugate",
            ModelConfig::Stirling => "stirling",
            ModelConfig::ExpMeans { .. } => "exp-means",
            ModelConfig::GammaCgf => "gamma-cgf",
            ModelConfig::NormalCgf => "normal-cgf",
            ModelConfig::ExpRegression => "exp-regression",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GlmFamilyTag {
    Poisson,
    Exponential,
    Logistic,
}

impl From<GlmFamilyTag> for GlmFamily {
    fn from(tag: GlmFamilyTag) -> GlmFamily {
        match tag {
            GlmFamilyTag::Poisson => GlmFamily::Poisson,
            GlmFamilyTag::Exponential => GlmFamily::Exponential,
            GlmFamilyTag::Logistic => GlmFamily::Logistic,
        }
    }
}

/// How the parameter dimension follows the sample size.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PRule {
    Fixed {
        p: usize,
    },
    /// `p = round(n^alpha)`; the asymptotic regimes under study require
    /// `alpha < 1`.
    Power {
        alpha: f64,
    },
}

impl PRule {
    pub fn p_for(&self, n: usize) -> usize {
        match *self {
            PRule::Fixed { p } => p,
            PRule::Power { alpha } => ((n as f64).powf(alpha).round() as usize).max(1),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OracleConfig {
    Quadrature {
        #[serde(default = "default_half_width")]
        half_width_sds: f64,
    },
    ImportanceSampling {
        draws: usize,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    ClosedForm,
}

impl OracleConfig {
    pub fn tag(&self) -> &'static str {
        match self {
            OracleConfig::Quadrature { .. } => "quadrature",
            OracleConfig::ImportanceSampling { .. } => "importance-sampling",
            OracleConfig::ClosedForm => "closed-form",
        }
    }
}

fn default_prior_sd() -> f64 {
    1.0
}

fn default_groups() -> usize {
    2
}

fn default_half_width() -> f64 {
    DEFAULT_HALF_WIDTH_SDS
}

fn default_scale() -> f64 {
    DEFAULT_PROPOSAL_SCALE
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Structural checks shared by every experiment; model/oracle pairing is
    /// checked by the experiment itself.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.n_grid.is_empty() {
            return Err(CliError::Config("n_grid must be nonempty".into()));
        }
        if self.n_grid.iter().any(|&n| n == 0) {
            return Err(CliError::Config("n_grid entries must be positive".into()));
        }
        let mut sorted = self.n_grid.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Config(
                "n_grid holds a duplicate; identical cells would reuse one seed".into(),
            ));
        }
        if self.replicates == 0 {
            return Err(CliError::Config("replicates must be at least 1".into()));
        }
        match self.p_rule {
            PRule::Fixed { p } => {
                if p == 0 {
                    return Err(CliError::Config("fixed p must be positive".into()));
                }
            }
            PRule::Power { alpha } => {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(CliError::Config(format!(
                        "power-law p rule needs 0 < alpha < 1, got {alpha}"
                    )));
                }
            }
        }
        match self.model {
            ModelConfig::Logistic { prior_sd } | ModelConfig::Glm { prior_sd, .. } => {
                if !(prior_sd > 0.0) {
                    return Err(CliError::Config(format!(
                        "prior_sd must be positive, got {prior_sd}"
                    )));
                }
            }
            ModelConfig::ExpMeans { groups } => {
                if groups < 2 {
                    return Err(CliError::Config("exp-means needs at least 2 groups".into()));
                }
            }
            _ => {}
        }
        match self.oracle {
            OracleConfig::Quadrature { half_width_sds } => {
                if !(half_width_sds > 0.0) {
                    return Err(CliError::Config("half_width_sds must be positive".into()));
                }
            }
            OracleConfig::ImportanceSampling { draws, scale } => {
                if draws < 1000 {
                    return Err(CliError::Config(format!(
                        "importance sampling needs at least 1000 draws, got {draws}"
                    )));
                }
                if !(scale > 0.0) {
                    return Err(CliError::Config("proposal scale must be positive".into()));
                }
            }
            OracleConfig::ClosedForm => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, serde_json::Error> {
        serde_json::from_str(text)
    }

    const FULL: &str = r#"{
        "experiment": "laplace-scaling",
        "model": {"kind": "logistic", "prior_sd": 1.0},
        "n_grid": [250, 500],
        "p_rule": {"kind": "power", "alpha": 0.3},
        "replicates": 5,
        "seed": 42,
        "oracle": {"kind": "importance-sampling", "draws": 200000},
        "output": "out.csv"
    }"#;

    #[test]
    fn full_config_parses_with_defaults_filled() {
        let cfg = parse(FULL).unwrap();
        assert_eq!(cfg.experiment, "laplace-scaling");
        assert_eq!(cfg.n_grid, vec![250, 500]);
        match cfg.oracle {
            OracleConfig::ImportanceSampling { draws, scale } => {
                assert_eq!(draws, 200_000);
                assert_eq!(scale, DEFAULT_PROPOSAL_SCALE);
            }
            other => panic!("wrong oracle: {other:?}"),
        }
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_field_is_rejected() {
        let text = FULL.replace("\"output\"", "\"outpath\"");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("unknown field"), "{err}");
    }

    #[test]
    fn unknown_model_kind_is_rejected() {
        let text = FULL.replace("logistic", "probit");
        assert!(parse(&text).is_err());
    }

    #[test]
    fn power_rule_alpha_must_stay_below_one() {
        let text = FULL.replace("0.3", "1.1");
        let cfg = parse(&text).unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("alpha"), "{err}");
    }

    #[test]
    fn duplicate_n_is_rejected() {
        let text = FULL.replace("[250, 500]", "[250, 250]");
        let err = parse(&text).unwrap().validate().unwrap_err().to_string();
        assert!(err.contains("duplicate"), "{err}");
    }

    #[test]
    fn p_rule_evaluation_rounds() {
        let rule = PRule::Power { alpha: 0.3 };
        assert_eq!(rule.p_for(250), 5);
        assert_eq!(rule.p_for(500), 6);
        assert_eq!(rule.p_for(1000), 8);
        assert_eq!(rule.p_for(2000), 10);
        assert_eq!(PRule::Fixed { p: 3 }.p_for(99), 3);
    }

    #[test]
    fn tiny_importance_budget_is_rejected() {
        let text = FULL.replace("200000", "100");
        let err = parse(&text).unwrap().validate().unwrap_err().to_string();
        assert!(err.contains("1000 draws"), "{err}");
    }
}
