//! Command-line harness for the SQG Galerkin solver: configuration,
//! experiment presets, verification suites and persistence.

pub mod commands;
pub mod error;
pub mod experiment;
pub mod plot;
pub mod settings;
pub mod suite;

pub use error::{CliError, CliResult};
