//! The `raincast` pipeline as a library: configuration, dataset loading and
//! the five subcommands. `main.rs` only parses arguments and reports errors.

pub mod commands;
pub mod config;
pub mod pipeline;

use std::path::{Path, PathBuf};

use raincast_core::grid_io::GridIoError;
use raincast_core::metrics::MetricsError;
use raincast_core::model::ModelError;
use raincast_core::preprocess::PreprocessError;
use raincast_core::synth::SynthError;
use raincast_tensor::TensorError;
use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: GridIoError },
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Checkpoint { path: PathBuf, source: TensorError },
    #[error("no checkpoint at {0}; run `raincast train` first")]
    MissingCheckpoint(PathBuf),
    #[error("issue time {issue_time} has {available} steps of history, {needed} needed")]
    InsufficientHistory { issue_time: i64, available: usize, needed: usize },
}

impl CliError {
    /// Machine-readable prefix printed as `error[Code]`.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Io { .. } => "IoError",
            Self::Config(_) => "ConfigError",
            Self::Format { source, .. } => source.code(),
            Self::Preprocess(e) => e.code(),
            Self::Synth(e) => e.code(),
            Self::Model(e) => e.code(),
            Self::Metrics(e) => e.code(),
            Self::Checkpoint { source, .. } => match source {
                TensorError::ShapeMismatch(_) => "ShapeMismatch",
                TensorError::InvalidConfig(_) => "InvalidConfig",
                TensorError::InvalidCheckpoint(_) => "InvalidCheckpoint",
            },
            Self::MissingCheckpoint(_) => "MissingCheckpoint",
            Self::InsufficientHistory { .. } => "InsufficientHistory",
        }
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
