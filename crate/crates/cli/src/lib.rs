//! Batch front-end for adabo: experiment configs, the optimize / benchmark /
//! sensitivity / report commands, and their output files.

pub mod commands;
pub mod config;

pub use commands::{cmd_benchmark, cmd_optimize, cmd_report, cmd_sensitivity, with_workers, Outcome};
pub use config::{parse_config, parse_config_str, CliError, ExperimentSpec, Mode, ObjectiveSpec, SensitivitySpec};
