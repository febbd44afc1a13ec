use std::path::Path;

use serde::{Deserialize, Serialize};
use tinyfit_core::nn::{TrainConfig, EXAMPLES_PER_CLASS};
use tinyfit_core::quant::PackageConfig;
use tinyfit_core::signal::synthetic::SyntheticConfig;
use tinyfit_device::DeviceConfig;
use tinyfit_server::ServerConfig;

use crate::error::{io_err, CliError, Result};

/// Seed used to pick the personalized subjects.
pub const DEFAULT_SLICE_SEED: u64 = 42;

/// Everything the commands read from `--config`. Every field has a default,
/// so an empty file is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub slice_seed: u64,
    /// Share of each generalized subject-class recording run held out as the
    /// generalized test set.
    pub test_fraction: f64,
    pub train: TrainConfig,
    pub fine_tune: TrainConfig,
    pub examples_per_class: usize,
    pub package: PackageConfig,
    /// Single-window inferences averaged for the latency figure.
    pub latency_runs: usize,
    pub synthetic: SyntheticConfig,
    pub server: ServerConfig,
    pub device: Option<DeviceConfig>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            slice_seed: DEFAULT_SLICE_SEED,
            test_fraction: 0.2,
            train: TrainConfig::default(),
            fine_tune: TrainConfig::fine_tune(),
            examples_per_class: EXAMPLES_PER_CLASS,
            package: PackageConfig::default(),
            latency_runs: 1000,
            synthetic: SyntheticConfig::default(),
            server: ServerConfig::default(),
            device: None,
        }
    }
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text, path)
    }

    /// Parses TOML, reporting errors with the 1-based line and column.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let config: Config = toml::from_str(text).map_err(|e| {
            let offset = e.span().map(|s| s.start).unwrap_or(0).min(text.len());
            let before = &text[..offset];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
            CliError::Config {
                path: path.to_owned(),
                line,
                column,
                message: e.message().to_owned(),
            }
        })?;
        config.validate().map_err(|message| CliError::Config {
            path: path.to_owned(),
            line: 0,
            column: 0,
            message,
        })?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(format!("test_fraction must be in (0, 1), got {}", self.test_fraction));
        }
        if self.examples_per_class == 0 {
            return Err("examples_per_class must be at least 1".into());
        }
        if self.latency_runs == 0 {
            return Err("latency_runs must be at least 1".into());
        }
        self.train.validate().map_err(|e| format!("train: {e}"))?;
        self.fine_tune.validate().map_err(|e| format!("fine_tune: {e}"))?;
        Ok(())
    }
}
