//! Orchestration layer for the toy guidance pipeline.
//!
//! The binary wires the core crate's dataset, training, sampling, analysis,
//! and evaluation stages into subcommands that each write their artifacts
//! (CSV, JSON, SVG) plus the fully resolved configuration into one output
//! directory, so any run can be reproduced from what it left behind.

use std::fmt;

pub mod commands;
pub mod config;
pub mod plot;

/// Errors split by exit code: configuration problems exit 2, everything
/// else exits 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Runtime(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<tcfg_core::CoreError> for CliError {
    fn from(e: tcfg_core::CoreError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}
