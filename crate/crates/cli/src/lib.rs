//! Pipeline orchestration for the `recon` command: dataset ingestion, run
//! settings, artifact writing and evaluation.

pub mod cli;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod evaluate;
pub mod manifest;

pub use commands::{cmd_eval, cmd_gradcheck, cmd_reconstruct, cmd_synth, ReconstructSummary, SynthOptions};
pub use config::{RunConfig, Settings};
pub use dataset::{load_sequence, SequenceBundle};
pub use evaluate::{evaluate, EvalReport};
