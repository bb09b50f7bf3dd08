//! Command line front end for the `ambisense` simulator: scenario files,
//! on-disk formats, and the subcommands as library functions.
//!
//! The `ambisense` binary is a thin wrapper around [`commands`]; everything
//! it does can also be driven from Rust.

pub mod commands;
pub mod error;
pub mod formats;
pub mod oracle;
pub mod presets;
pub mod scenario;

pub use error::{CliError, CliResult};
pub use scenario::Scenario;
