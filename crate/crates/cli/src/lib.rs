//! Experiment runner around `spde-core`: JSON configurations, the `run`, `sweep` and
//! `replay` verbs, and deterministic on-disk artifacts.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod svg;

pub use commands::{replay, run, sweep, CommonOptions};
pub use config::{load_config, parse_config, ExperimentConfig};
pub use error::{exit, CliError, CliResult};
