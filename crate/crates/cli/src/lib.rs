//! Command-line harness for `simlearn`.
//!
//! The library half holds everything the binary does so that integration
//! tests can drive the commands directly:
//!
//! * [`config`] parses and validates experiment configurations.
//! * [`registry`] lists the built-in and registered Fenchel pairs.
//! * [`distortion`] runs the pointwise sandwich suites.
//! * [`experiment`] trains learners and evaluates bound checks into CSV rows.
//! * [`verify`] runs the acceptance suite.

pub mod commands;
pub mod config;
pub mod distortion;
pub mod error;
pub mod experiment;
pub mod registry;
pub mod toy;
pub mod verify;

pub use error::CliError;
