//! Batch front end for the three-mode optomechanics simulator: scenario
//! configs in, deterministic CSV/JSON artifacts out.

use thiserror::Error;

pub mod config;
pub mod output;
pub mod pipeline;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("sweep completed with {failed} failed point(s)")]
    PartialSweep { failed: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit code: 0 success, 2 config error, 3 numerical failure,
    /// 4 partial sweep failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 3,
            CliError::PartialSweep { .. } => 4,
        }
    }
}
