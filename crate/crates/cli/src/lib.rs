//! The `wavegan` command line: preprocessing, training, generation,
//! listening-test evaluation and the rating service.

pub mod args;
pub mod commands;
mod error;
pub mod manifest;
pub mod service;

pub use error::CliError;
