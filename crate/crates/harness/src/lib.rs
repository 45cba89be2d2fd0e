//! Experiment harness for the `raas-core` library: JSON configs, parallel
//! runs over methods and seeds, CSV/SVG output, trace verification and the
//! theory constants.

pub mod aggregate;
pub mod config;
pub mod constants;
pub mod emit;
mod error;
pub mod experiment;
pub mod verify;

pub use config::{load_config, ExperimentConfig, MethodEntry, ProblemSpec};
pub use error::HarnessError;
pub use experiment::{run_experiment, ExperimentResult, RunTrace};
