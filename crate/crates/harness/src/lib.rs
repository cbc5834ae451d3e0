//! Experiment harness: JSON configuration, the end-to-end pipeline, the
//! (Kn, h) scaling sweep and deterministic plot-data emission.

pub mod cli;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod plotdata;
pub mod sweep;

pub use config::{ExperimentConfig, HMode};
pub use error::{HarnessError, Result};
pub use pipeline::{run_pipeline, PipelineReport};
pub use sweep::{run_figure_sweep, SweepOutcome, SweepRow};
