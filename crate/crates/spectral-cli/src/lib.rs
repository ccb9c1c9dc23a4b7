//! IO companion for `spectral-core`: CSV data files, flat-key config
//! files, plain-text model persistence, and the command implementations
//! behind the `spectral` binary.

pub mod commands;
pub mod error;
pub mod io;

pub use error::CliError;
