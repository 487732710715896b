//! Experiment harness: configuration, data loading and the `train`,
//! `exp1`, `exp2` and `score` commands behind the `cfu` binary.

pub mod commands;
pub mod config;
pub mod data;
mod error;
pub mod output;
pub mod scoring;

pub use commands::{cmd_exp1, cmd_exp2, cmd_score, cmd_train, with_thread_cap, Exp1Summary, Exp2Summary, TrainMetrics};
pub use config::ExperimentConfig;
pub use error::{CliError, Result, EXIT_FAILURE, EXIT_USAGE};
