//! Compression of a float model into a deployable int8 bundle: magnitude
//! pruning of the hidden dense layer, post-training quantization calibrated
//! on real windows, and the `TBND` wire format.

mod bundle;
mod calibrate;
mod prune;
mod scheme;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{CnnModel, NnError};
use crate::signal::{ChannelStats, Window};

pub use bundle::{LayerKind, ModelBundle, QuantLayer, FORMAT_VERSION, MAGIC, POOL, SIZE_LIMIT};
pub use calibrate::{calibrate_and_quantize, ActivationRange};
pub use prune::{prune_magnitude, zero_count};
pub use scheme::{
    activation_params, quantize_activation, quantize_bias, quantize_symmetric, round_half_away, Requant, MAX_SHIFT,
};

#[derive(Debug, Error)]
pub enum QuantError {
    #[error("requantization multiplier {0} is not representable")]
    RequantRange(f64),
    #[error("sparsity must be in [0, 1), got {0}")]
    BadSparsity(f64),
    #[error("calibration needs at least one window")]
    EmptyCalibration,
    #[error("not a TBND bundle (magic {0:02x?})")]
    BadMagic([u8; 4]),
    #[error("unsupported bundle format version {0}")]
    UnsupportedVersion(u16),
    #[error("checksum mismatch: stored {stored:#010x}, computed {actual:#010x}")]
    CrcMismatch { stored: u32, actual: u32 },
    #[error("bundle truncated: {len} bytes, at least {min} required")]
    Truncated { len: usize, min: usize },
    #[error("malformed bundle: {0}")]
    Malformed(String),
    #[error("bundle is {size} bytes; the limit is {limit}")]
    TooLarge { size: usize, limit: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
}

pub type Result<T, E = QuantError> = std::result::Result<T, E>;

/// Settings of the prune -> calibrate -> quantize pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PackageConfig {
    /// Fraction of Dense1 weights zeroed before quantization.
    pub sparsity: f64,
    /// Calibration windows drawn (seeded, without replacement) from the pool.
    pub calibration_windows: usize,
    pub seed: u64,
    pub version: u32,
}

impl Default for PackageConfig {
    fn default() -> Self {
        Self {
            sparsity: 0.3,
            calibration_windows: 256,
            seed: 7,
            version: 1,
        }
    }
}

/// Seeded subset of at most `n` windows, kept in their original order.
pub fn calibration_subset(pool: &[Window], n: usize, seed: u64) -> Vec<&Window> {
    if pool.len() <= n {
        return pool.iter().collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, pool.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| &pool[i]).collect()
}

/// Prunes, calibrates and quantizes `model`. `calibration_pool` holds
/// normalized windows; `stats` is embedded so the device can normalize raw
/// input itself.
pub fn package(
    model: &CnnModel,
    stats: &ChannelStats,
    calibration_pool: &[Window],
    config: &PackageConfig,
) -> Result<ModelBundle> {
    let pruned = prune_magnitude(model, config.sparsity)?;
    let windows = calibration_subset(calibration_pool, config.calibration_windows, config.seed);
    let layers = calibrate_and_quantize(&pruned, &windows)?;
    let bundle = ModelBundle {
        version: config.version,
        classes: model.classes.clone(),
        stats: *stats,
        layers,
    };
    bundle.validate()?;
    Ok(bundle)
}
