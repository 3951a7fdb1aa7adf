use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {field}: {reason}")]
    Config { field: String, reason: String },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{context}: {source}")]
    Numeric { context: String, source: metaopt_core::Error },
}

impl HarnessError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } | HarnessError::Parse(_) => 2,
            HarnessError::Numeric { .. } => 3,
            HarnessError::Io { .. } | HarnessError::Csv(_) => 1,
        }
    }
}
