//! Experiment orchestration for the `cited` command-line tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

pub use commands::Layout;
pub use config::ExperimentConfig;
pub use error::CliError;
