//! Library side of the `mtm` command line tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod html;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
