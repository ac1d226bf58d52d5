use std::path::PathBuf;
use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Core(#[from] tokendrop_core::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    /// A run completed but one of its built-in checks did not hold.
    #[error("check failed: {0}")]
    Check(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> CliError {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Check(_) => ExitCode::from(1),
            _ => ExitCode::from(2),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
