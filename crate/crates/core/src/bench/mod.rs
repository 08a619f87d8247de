//! Benchmark harness: dataset manifest, validation, metrics, the runner and
//! report files.

pub mod fixture;
pub mod manifest;
pub mod metrics;
pub mod report;
pub mod runner;
pub mod validate;

pub use manifest::{Manifest, ManifestError};
pub use metrics::{MetricParams, TiePolicy};
pub use runner::{run_benchmark, BenchError, BenchOptions, MetricsReport, SampleRow, SampleStatus, Summary};
pub use validate::{compute_stats, validate_manifest, StatsReport, ValidationErrors};
