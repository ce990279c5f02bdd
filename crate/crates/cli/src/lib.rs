//! Library surface of the experiment CLI: configuration parsing, batch
//! execution, and plot-data emission. The binary in `main.rs` is a thin
//! wrapper over [`runner::run`] and [`emit::emit_plot_data`].

pub mod bundle;
pub mod config;
pub mod emit;
pub mod runner;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration or arguments (exit code 2).
    #[error("config error: {0}")]
    Config(String),

    /// A bundle lacks the reports an emission kind needs.
    #[error("{0}")]
    MissingReports(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Core(#[from] flatminima_core::Error),
}

pub use bundle::{ReportBundle, Summary, TrialOutcome, TrialReport};
pub use config::{ExperimentConfig, ExperimentKind};
pub use emit::{emit_plot_data, read_bundle, write_bundle, EmitKind};
pub use runner::{effective_base_seed, run, SEED_ENV};
