//! Command-line experiment runner: config parsing, seed management, report
//! emission and the verification suite.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod suite;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
