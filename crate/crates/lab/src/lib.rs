//! Experiment driver for `livsic-core`: JSON configs, subcommand pipelines,
//! reports and plot data.

pub mod battery;
pub mod config;
pub mod error;
pub mod report;
pub mod run;

pub use config::ExperimentConfig;
pub use error::{LabError, Result};
pub use report::{emit_plot_data, PlotKind, RunReport};
pub use run::{run, Command, RunOutput};
