//! Command-line driver: config parsing, data preparation, experiment runs and
//! metric/plot/manifest output.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod output;

pub use commands::run_command;
pub use error::{CliError, Result};
