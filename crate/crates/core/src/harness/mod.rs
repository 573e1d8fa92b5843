//! Experiment harness: configuration, checkpoints, run manifests and the
//! commands behind the `l2m` binary.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod manifest;
pub mod run;

pub use checkpoint::Checkpoint;
pub use config::{ExperimentConfig, Method};
pub use manifest::{Invocation, LabeledInput, RunManifest};
pub use run::{execute, load_dataset, replay, run_method, Artifacts, MethodResult};
