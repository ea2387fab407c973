//! Declarative experiment runner for the `aircomp-core` toolkit.
//!
//! A TOML config names an experiment kind, a seed, a trial count and a table
//! of parameters; array-valued parameters are swept. Runs are deterministic
//! in the config alone and are written as CSV or JSON lines.

pub mod config;
pub mod experiments;
pub mod export;
pub mod runner;

pub use config::{load_config, parse_config, ConfigError, ExperimentConfig, ExperimentKind, ParamSetting, ParamValue};
pub use export::{export_results, parse_results, ExportError, Format};
pub use runner::{run_experiment, run_to_file, run_trial, RunError, RunFileError, RunRecord, RunSummary};
