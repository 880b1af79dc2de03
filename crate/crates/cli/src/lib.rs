//! Config-driven runs of the disorder-chain library: parse a TOML run
//! description, validate it, run the chain map and/or the reference oracles
//! and write trajectories, error tables and a re-runnable manifest.

use std::path::Path;

pub mod config;
pub mod model;
pub mod output;
pub mod run;

pub use config::RunConfig;

/// Exit statuses of the `disorder-chain` binary.
pub mod exit {
    pub const OK: i32 = 0;
    /// I/O failure while writing results.
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    /// Leakage, depth or Krylov convergence failure.
    pub const NUMERIC: i32 = 3;
    pub const COMPARISON: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error{}: {message}", if path.is_empty() { String::new() } else { format!(" at {path}") })]
    Config { path: String, message: String },
    #[error("{} invalid entries:\n{}", .0.len(), .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<model::Issue>),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn config(path: &str, message: impl Into<String>) -> Self {
        CliError::Config { path: path.to_string(), message: message.into() }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Invalid(_) => exit::CONFIG,
            CliError::Numeric(_) => exit::NUMERIC,
            CliError::Io { .. } => exit::IO,
        }
    }
}
