//! Benchmark harness for latent recalibration: data ingestion, BASE / LR /
//! HDR-R experiments and their reports.

pub mod config;
pub mod dataset;
mod error;
pub mod experiment;
pub mod model;
pub mod report;
pub mod stages;

pub use config::{CalibrationSplit, DataSource, ExperimentConfig};
pub use error::{BenchError, Result};
pub use experiment::{run_seed, SeedResult};
pub use report::Report;
