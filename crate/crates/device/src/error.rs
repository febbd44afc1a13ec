use std::path::PathBuf;

use tinyfit_core::runtime::RuntimeError;
use tinyfit_core::signal::SignalError;

use crate::api::TransportError;

#[derive(Debug, thiserror::Error)]
pub enum DeviceError {
    #[error("invalid device config: {0}")]
    Config(String),
    #[error("server at {url} is unreachable: {reason}")]
    Unreachable { url: String, reason: String },
    #[error("server rejected the device: {0}")]
    Rejected(TransportError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("recording of {seconds} s is too short (minimum {min} s)")]
    TooShort { seconds: f64, min: f64 },
    #[error("sample source ended after {got} of {needed} samples")]
    SourceExhausted { got: usize, needed: usize },
    #[error("failed to read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed CSV at line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("event log: {0}")]
    Log(#[from] std::io::Error),
}

pub type Result<T, E = DeviceError> = std::result::Result<T, E>;
