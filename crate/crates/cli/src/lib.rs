//! Command-line front end: configuration, frame ingestion and the
//! `serve`, `replay`, `bench`, `eval` and `augment` modes.

pub mod commands;
pub mod config;
pub mod ingest;
pub mod replay;
pub mod wiring;

use thiserror::Error;

pub use config::EngineConfig;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config file, flag or missing input. Exit code 1.
    #[error("config error: {0}")]
    Config(String),
    /// Anything that fails after startup. Exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}
