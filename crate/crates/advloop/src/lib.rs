//! Experiment runner around the `advloop-core` testbed: configuration,
//! dataset/checkpoint/log file formats, the TCP transport, the scenario
//! grids, and SVG reporting.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod logio;
pub mod svg;
pub mod tcp;

/// Errors surfaced by the CLI, each category with its own exit code.
#[derive(Debug)]
pub enum CliError {
    /// Invalid or unreadable configuration (exit 2).
    Config(String),
    /// Missing or malformed input artifacts (exit 3).
    MissingInput(String),
    /// Unusable model checkpoint (exit 4).
    Checkpoint(String),
    /// Transport/socket failures (exit 5).
    Transport(String),
    /// Everything else (exit 1).
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingInput(_) => 3,
            CliError::Checkpoint(_) => 4,
            CliError::Transport(_) => 5,
            CliError::Other(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::MissingInput(m) => write!(f, "missing input: {m}"),
            CliError::Checkpoint(m) => write!(f, "checkpoint error: {m}"),
            CliError::Transport(m) => write!(f, "transport error: {m}"),
            CliError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(format!("io error: {e}"))
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<advloop_core::scene::SceneError> for CliError {
    fn from(e: advloop_core::scene::SceneError) -> Self {
        CliError::Config(format!("{e}"))
    }
}
