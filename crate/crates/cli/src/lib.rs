//! Command-line front end for the `fasm` estimator: CSV in, CSV and text
//! reports out.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use commands::run;
pub use config::Cli;
pub use error::CliError;
