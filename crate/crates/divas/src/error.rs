//! Failure classes and the exit codes they map to.

use divas_core::DivasError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("ingestion error: {0}")]
    Ingest(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// writing artifacts failed
    #[error("output error: {0}")]
    Output(String),
}

/// Serialized to stderr (and `error.json` when the output directory
/// exists) whenever a command fails.
#[derive(Debug, Serialize)]
pub struct ErrorRecord<'a> {
    pub status: &'static str,
    pub kind: &'static str,
    pub exit_code: i32,
    pub message: &'a str,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Ingest(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Output(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Ingest(_) => "ingestion",
            CliError::Numeric(_) => "numeric",
            CliError::Output(_) => "output",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Ingest(m) | CliError::Numeric(m) | CliError::Output(m) => m,
        }
    }

    pub fn record(&self) -> ErrorRecord<'_> {
        ErrorRecord { status: "error", kind: self.kind(), exit_code: self.exit_code(), message: self.message() }
    }

    pub fn record_json(&self) -> String {
        serde_json::to_string(&self.record()).expect("error record serializes")
    }

    pub fn numeric(e: DivasError) -> Self {
        CliError::Numeric(e.to_string())
    }

    pub fn output(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        CliError::Output(format!("{context}: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
