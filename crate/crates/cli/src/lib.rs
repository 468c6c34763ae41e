//! Command-line front end for `steepfit`.
//!
//! Every run is described by a [`RunConfig`], built from flags, a TOML file,
//! or both, and produces a [`RunReport`] plus CSV exports.

pub mod config;
pub mod error;
pub mod run;

pub use config::{Cli, Command, RunConfig};
pub use error::CliError;
pub use run::{execute, report_json, run, write_artifacts, Artifact, Outcome, RunReport};
