//! IO, file formats, benchmarking, and the command-line surface around the
//! `adaseg-core` training engine: flat key-value configs and run manifests,
//! PNG/JPEG dataset directories, binary checkpoints, line-delimited metrics
//! logs, the wall-clock inference benchmark, and the protocol/ablation
//! drivers.

pub mod ablate;
pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod config_file;
pub mod dataset_io;
pub mod metrics_log;
pub mod protocol;
pub mod report;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] adaseg_core::Error),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Config(String),
    #[error("image decode error on {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("unsupported device `{0}`; this build runs on `cpu`")]
    Device(String),
}

pub type Result<T> = std::result::Result<T, AppError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> AppError {
    let path = path.into();
    move |source| AppError::Io { path, source }
}
