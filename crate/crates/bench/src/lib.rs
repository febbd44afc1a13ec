//! Fixtures shared by the benchmarks.

use tinyfit_core::nn::{init_model, train, CnnModel, TrainConfig};
use tinyfit_core::quant::{package, PackageConfig};
use tinyfit_core::signal::synthetic::{SyntheticConfig, SyntheticGenerator};
use tinyfit_core::signal::{fit_channel_stats, normalize, windows_from_recordings};
use tinyfit_core::{ChannelStats, ClassMap, Window};

pub struct Fixture {
    pub model: CnnModel,
    pub stats: ChannelStats,
    /// Raw windows, as the device sees them.
    pub raw: Vec<Window>,
    /// The same windows normalized for the float model.
    pub normalized: Vec<Window>,
    pub bundle: Vec<u8>,
}

/// A briefly trained seven-class model and its packaged bundle.
pub fn fixture() -> Fixture {
    let gen = SyntheticGenerator::new(SyntheticConfig {
        subjects: 4,
        recordings_per_class: 1,
        seconds_per_recording: 20.0,
        ..SyntheticConfig::default()
    });
    let raw = windows_from_recordings(&gen.dataset()).expect("synthetic recordings are 20 Hz");
    let stats = fit_channel_stats(&raw).expect("non-empty");
    let normalized: Vec<Window> = raw.iter().map(|w| normalize(w, &stats)).collect();
    let classes = ClassMap::new(&gen.config().classes);
    let config = TrainConfig {
        epochs: 2,
        ..TrainConfig::default()
    };
    let (model, _) = train(&init_model(classes, 7).expect("valid"), &normalized, &config).expect("trains");
    let bundle = package(&model, &stats, &normalized, &PackageConfig::default())
        .and_then(|b| b.serialize())
        .expect("packages");
    Fixture {
        model,
        stats,
        raw,
        normalized,
        bundle,
    }
}
