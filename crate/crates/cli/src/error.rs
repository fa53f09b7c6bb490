//! CLI errors and their exit codes.

use std::path::PathBuf;

use serde::Serialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PIPELINE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments or configuration, or a refused overwrite.
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Pipeline(#[from] litrag_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Machine-readable error printed with `--json`.
#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: String,
    pub kind: &'static str,
    pub exit_code: i32,
    pub retryable: bool,
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Pipeline(_) | CliError::Io { .. } => EXIT_PIPELINE,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Pipeline(e) if e.provider_error().is_some() => "provider",
            CliError::Pipeline(_) => "pipeline",
            CliError::Io { .. } => "io",
        }
    }

    pub fn body(&self, redact: impl Fn(&str) -> String) -> ErrorBody {
        let retryable = match self {
            CliError::Pipeline(e) => e.provider_error().is_some_and(|p| p.retryable()),
            _ => false,
        };
        ErrorBody {
            error: redact(&self.to_string()),
            kind: self.kind(),
            exit_code: self.exit_code(),
            retryable,
        }
    }
}

/// Lifts any error convertible into the core umbrella error.
pub fn pipeline<E: Into<litrag_core::Error>>(e: E) -> CliError {
    CliError::Pipeline(e.into())
}
