//! Experiment runner library behind the `kloosterlab` binary: declarative
//! configs, deterministic sweeps, CSV/JSONL artifacts.

pub mod config;
pub mod experiments;
pub mod pool;
pub mod writer;

pub use config::{load_config, ExperimentConfig, ExperimentSpec};
pub use experiments::{run_experiment, RunArtifacts};
