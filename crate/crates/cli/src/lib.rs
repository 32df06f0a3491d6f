//! Experiment runner: configuration, the run pipeline, parameter sweeps and
//! offline certification of stored histories.

pub mod config;
pub mod expr;
pub mod pipeline;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{stage} failed: {source}")]
    Solver {
        stage: &'static str,
        #[source]
        source: robin_dd::Error,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot read {what}: {message}")]
    Input { what: String, message: String },
}

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const NOT_CONVERGED: i32 = 2;
    pub const CERTIFICATE: i32 = 3;
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver { .. } => exit::NOT_CONVERGED,
            _ => exit::USAGE,
        }
    }
}

pub(crate) fn solver(stage: &'static str) -> impl FnOnce(robin_dd::Error) -> CliError {
    move |source| CliError::Solver { stage, source }
}
