use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at {field}: {message}")]
    Config { field: String, message: String },

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Core(#[from] cited_core::Error),

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::MissingArtifact(_) => 3,
            CliError::Invariant(_) => 4,
            CliError::Core(cited_core::Error::InvalidConfig(_)) => 2,
            CliError::Core(cited_core::Error::HypothesisViolated { .. }) => 4,
            CliError::Core(_) | CliError::Csv(_) => 1,
        }
    }
}
