use std::path::PathBuf;

use tinyfit_core::nn::NnError;
use tinyfit_core::quant::QuantError;
use tinyfit_core::runtime::RuntimeError;
use tinyfit_core::signal::SignalError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}:{line}:{column}: {message}")]
    Config {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bundle is {size} bytes; the limit is {limit}")]
    SizeGate { size: usize, limit: usize },
    #[error("{0}")]
    Usage(String),
    #[error("evaluation: {0}")]
    Evaluation(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Device(#[from] tinyfit_device::DeviceError),
    #[error("server: {0}")]
    Server(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
