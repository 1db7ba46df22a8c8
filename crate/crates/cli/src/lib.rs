//! Library side of the `prmf` command-line tool: configuration, prepared
//! data on disk, checkpoints, reports and the subcommands themselves.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod report;

pub use checkpoint::Checkpoint;
pub use config::{Method, Overrides, RunConfig};
pub use error::{CliError, Result};
