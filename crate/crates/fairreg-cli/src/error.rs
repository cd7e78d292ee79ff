//! CLI-level errors, classified by the process exit code they map to.

use std::path::PathBuf;
use std::process::ExitCode;

/// Anything that can stop or degrade a command run.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration, bad flags, unreadable inputs, schema mismatches.
    /// Maps to exit code 1.
    #[error("config error: {0}")]
    Config(String),

    /// The run finished and wrote its outputs, but some sub-jobs failed.
    /// The failures are recorded as rows in the output CSVs. Maps to exit
    /// code 2.
    #[error("partial failure: {failed} of {total} jobs failed (results preserved)")]
    Partial { failed: usize, total: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Lib(#[from] fairreg::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> CliError {
        CliError::Io { path: path.into(), source }
    }

    /// Exit codes: 0 success, 1 config error, 2 partial failure. Everything
    /// that prevents a run from starting or finishing cleanly (bad config,
    /// unreadable files, library errors outside sub-jobs) is class 1;
    /// sub-job failures recorded as rows are class 2.
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Partial { .. } => ExitCode::from(2),
            _ => ExitCode::from(1),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
