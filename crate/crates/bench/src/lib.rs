//! Config-driven experiments on top of `ood-core`: scenario generation,
//! oracle evaluation and training runs, and deterministic CSV/JSON reports.

pub mod config;
pub mod emit;
pub mod error;
pub mod runner;
pub mod scenarios;

pub use config::ExperimentConfig;
pub use emit::{emit_report, ReportFormat};
pub use error::{BenchError, Result};
pub use runner::{compare_shared_vs_separate, run_experiment, ExperimentResult, PairedReport};
pub use scenarios::generate_scenario;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "OOD_BENCH_OUT";
