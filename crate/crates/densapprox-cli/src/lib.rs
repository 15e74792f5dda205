//! Experiment harness for the `densapprox` library: configuration-driven runs
//! of the approximation engines against oracles across (n, p) grids, with
//! deterministic seeding, CSV/JSON artifacts, and per-cell error capture.

use thiserror::Error;

pub mod config;
pub mod experiments;
pub mod output;
pub mod runner;

pub use config::ExperimentConfig;
pub use experiments::{find_experiment, Artifact, Experiment, REGISTRY};

/// Harness-level failures. Cell-level failures never surface here; they are
/// recorded in the output and turn the exit code into 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Engine(#[from] densapprox::Error),
}

impl CliError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
