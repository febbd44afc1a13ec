//! Core algorithms for on-device personalized human activity recognition.
//!
//! The crate is split along the data path:
//!
//! - [`signal`]: IMU ingestion, resampling to 20 Hz, windowing (60 x 6) and
//!   per-channel normalization.
//! - [`nn`]: a small 1D CNN trained from scratch in double precision, plus
//!   last-layer personalization.
//! - [`quant`]: magnitude pruning, int8 post-training quantization and the
//!   `TBND` bundle wire format.
//! - [`runtime`]: an integer-only inference engine that executes a bundle
//!   inside a fixed-size arena.

pub mod class_map;
pub mod codec;
pub mod event;
pub mod nn;
pub mod quant;
pub mod runtime;
pub mod signal;

pub use class_map::ClassMap;
pub use event::{InferenceEvent, RecordingReceipt};
pub use nn::{Architecture, CnnModel, TrainConfig};
pub use quant::{ModelBundle, PackageConfig};
pub use runtime::{Engine, InferenceResult};
pub use signal::{ChannelStats, ImuSample, Recording, Window, WindowRows};
