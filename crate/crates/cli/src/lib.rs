//! Batch front end for the `regime-rkf` solver: JSON configs in, CSV out.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::CliError;
pub use config::{parse_config, RunConfig};
