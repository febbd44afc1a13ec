use std::net::SocketAddr;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use tinyfit_core::nn::{TrainConfig, EXAMPLES_PER_CLASS};
use tinyfit_core::PackageConfig;

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    /// Directory holding the write-ahead log.
    pub data_dir: PathBuf,
    /// Generalized float checkpoint that fine-tuning starts from.
    pub checkpoint: Option<PathBuf>,
    /// Free-form tag naming the dataset the checkpoint was trained on.
    pub dataset_tag: Option<String>,
    pub examples_per_class: usize,
    pub fine_tune: TrainConfig,
    pub sparsity: f64,
    pub calibration_windows: usize,
    /// `fsync` every log append.
    pub fsync: bool,
}

impl Default for ServerConfig {
    fn default() -> Self {
        let package = PackageConfig::default();
        Self {
            bind: DEFAULT_BIND.parse().expect("valid default address"),
            data_dir: PathBuf::from("tinyfit-data"),
            checkpoint: None,
            dataset_tag: None,
            examples_per_class: EXAMPLES_PER_CLASS,
            fine_tune: TrainConfig::fine_tune(),
            sparsity: package.sparsity,
            calibration_windows: package.calibration_windows,
            fsync: true,
        }
    }
}
