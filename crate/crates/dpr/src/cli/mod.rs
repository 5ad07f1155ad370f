//! Configuration, checkpoints, pipeline orchestration, and the subcommand
//! surface used by the `dpr` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod pipeline;

pub use checkpoint::Checkpoint;
pub use commands::run_cli;
pub use config::{validate_config, validate_config_str, DimPreset, ModelKind, PipelineConfig};
pub use manifest::{fingerprint, RunManifest};
pub use pipeline::{run_pipeline, Artifacts};
