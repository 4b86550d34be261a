use std::path::PathBuf;

use aerial_core::solver::SolverError;
use aerial_core::ModelError;
use aerial_marl::MarlError;
use aerial_nn::NnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("exact solving unsupported for {0}: the model is generative only")]
    ExactUnsupported(String),

    #[error(transparent)]
    Solver(#[from] SolverError),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Marl(#[from] MarlError),

    #[error(transparent)]
    Nn(#[from] NnError),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// 0 success, 1 usage/config, 2 runtime, 3 budget exceeded.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config(_) | Self::ExactUnsupported(_) => 1,
            Self::Solver(SolverError::EnumerationBudgetExceeded { .. })
            | Self::Solver(SolverError::NodeBudgetExceeded { .. })
            | Self::Solver(SolverError::HeuristicTooLarge(_)) => 3,
            Self::Marl(MarlError::InvalidConfig(_)) | Self::Model(ModelError::InvalidConfig(_)) => 1,
            _ => 2,
        }
    }
}
