//! Command-line front end: configuration files, sub-commands and the
//! artifacts they write.

pub mod bench;
pub mod commands;
pub mod config;
pub mod error;

pub use commands::run;
pub use config::{Command, ConfigMap, RunConfig};
pub use error::CliError;
