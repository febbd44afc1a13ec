//! Library behind the `tinyfit` command: dataset ingest, the evaluation
//! protocol, packaging, reports and the scripted OTA loop.

pub mod config;
pub mod dataset;
mod error;
pub mod experiment;
pub mod ota;
pub mod report;

pub use config::Config;
pub use dataset::{DatasetKind, IngestSummary};
pub use error::{CliError, Result};
