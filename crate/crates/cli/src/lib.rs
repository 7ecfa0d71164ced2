//! Configured, reproducible experiment runs for `skewlab`.

pub mod app;
pub mod compare;
pub mod config;
pub mod error;
pub mod manifest;
pub mod run;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::CliError;
pub use manifest::RunManifest;
