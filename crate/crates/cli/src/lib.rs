//! Command implementations behind the `physattn` binary, exposed as a
//! library so tests can drive them directly.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod svg;

use std::fmt;

/// CLI failure classes; each maps to a documented exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or unparseable input files -> exit 1.
    Config(String),
    /// Numeric divergence in a requested computation -> exit 2.
    Divergence(String),
    /// Filesystem trouble -> exit 1.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Divergence(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Divergence(msg) => write!(f, "numeric divergence: {msg}"),
            CliError::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

pub use config::ExperimentConfig;
