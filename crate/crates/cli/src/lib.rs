//! Experiment runner: TOML-configured Monte-Carlo sweeps over SNR with
//! per-run traces, RMSE tables and spectra.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{ConfigError, ExperimentConfig, Method, TraceOutput};
pub use runner::{run_experiment, run_method, run_solver, trial_seed, Experiment, RunError};
