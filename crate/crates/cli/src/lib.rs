//! Library side of the `har` command-line tool: run configuration, the
//! `validate`/`extract`/`train`/`evaluate` commands and their output files.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{Context, OutputLayout};
pub use config::RunConfig;
pub use error::CliError;
pub use output::Report;
