//! Experiment runner for muonlab: flat TOML configs, seeded runs with tuning
//! grids, figure suites and CSV/JSON artifacts.

pub mod checks;
pub mod cli;
pub mod config;
pub mod emit;
pub mod pool;
pub mod runner;
pub mod suites;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{ExperimentConfig, Preset};
pub use runner::{run_experiment, RunArtifact};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Problem(#[from] muonlab_core::problems::ProblemError),
    #[error(transparent)]
    Optim(#[from] muonlab_core::optim::OptimError),
    #[error(transparent)]
    Verify(#[from] muonlab_core::verify::VerifyError),
    #[error(transparent)]
    Diag(#[from] muonlab_core::diagnostics::DiagError),
    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("usage: {0}")]
    Usage(String),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}
