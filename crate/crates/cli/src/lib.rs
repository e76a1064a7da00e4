//! Commands behind the `nerfpp` binary: dataset synthesis, training,
//! rendering, evaluation and the scripted comparisons.

pub mod commands;
pub mod config;
pub mod experiment;

pub use commands::{cmd_eval, cmd_render, cmd_synth, cmd_train, load_trainer};
pub use config::{ExperimentKind, Overrides, RunConfig};
pub use experiment::{cmd_experiment, Report, ReportRow};
