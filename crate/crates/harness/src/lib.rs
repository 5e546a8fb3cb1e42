//! Batch experiments over the dera pipelines: configuration, per-item run
//! logs, and reports.

pub mod config;
pub mod item;
pub mod report;
pub mod runner;

pub use config::{BackendKind, ConfigError, ExperimentConfig, Settings, Task};
pub use item::{Detail, ItemRecord, ScorePair};
pub use report::{report_dir, report_files, Report, ReportError};
pub use runner::{backend_for, build_backend, run_experiment, run_with_backend, RunError, RunSummary};
