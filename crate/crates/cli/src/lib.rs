//! Configuration-driven pipeline around `diresa-core`: dataset and
//! checkpoint files, run manifests, CSV reports and the `generate`, `train`,
//! `evaluate`, `analyze` and `bench` commands.

pub mod checkpoint;
pub mod config;
pub mod dataset_io;
pub mod error;
pub mod fsutil;
pub mod manifest;
pub mod method;
pub mod pipeline;
pub mod report;

pub use error::{CliError, Result};
