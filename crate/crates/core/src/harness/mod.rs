//! Reproducible experiment runner.

pub mod config;
pub mod output;
pub mod run;

pub use config::{ExperimentConfig, ExperimentKind, Geometric, Grid, OutputFormat, Plan};
pub use output::{read_rows, write_rows, ResultRow, COLUMNS, RESULT_FORMAT_VERSION};
pub use run::{execute, run_experiment, Outcome, RunReport};
pub use crate::stream::{derive_stream, Purpose, StreamKey};
