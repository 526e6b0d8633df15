//! Config-driven pipeline around the `discalign` library: ingest, train,
//! evaluate, map, relabel, extrinsic evaluation and report generation, with
//! a manifest per stage so unchanged stages are skipped on rerun.

pub mod config;
pub mod error;
pub mod files;
pub mod manifest;
pub mod pipeline;
pub mod plot;
pub mod report;

pub use config::{LoadedConfig, PipelineConfig};
pub use error::{CliError, Result};
pub use pipeline::{Pipeline, Stage, StageStatus};
