//! Library side of the `vqlens` command-line tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod serve;

pub use config::RunConfig;
pub use error::CliError;
