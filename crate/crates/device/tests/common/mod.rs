#![allow(dead_code)]

use std::sync::{Arc, Mutex};

use tinyfit_core::nn::init_model;
use tinyfit_core::quant::{package, PackageConfig};
use tinyfit_core::signal::synthetic::{SyntheticConfig, SyntheticGenerator, BAND_CLASSES};
use tinyfit_core::signal::{fit_channel_stats, make_windows, normalize, resample, Window};
use tinyfit_core::{ClassMap, InferenceEvent, RecordingReceipt};
use tinyfit_device::{DeviceApi, TransportError};

/// Raw synthetic windows at 20 Hz for every band class.
pub fn raw_windows() -> Vec<Window> {
    let g = SyntheticGenerator::new(SyntheticConfig {
        subjects: 2,
        recordings_per_class: 1,
        seconds_per_recording: 12.0,
        ..SyntheticConfig::default()
    });
    g.dataset()
        .iter()
        .flat_map(|r| make_windows(&resample(r, 20.0).unwrap()).unwrap())
        .collect()
}

/// An untrained model over the band classes, packaged at `version`.
pub fn bundle(version: u32) -> Vec<u8> {
    let raw = raw_windows();
    let stats = fit_channel_stats(&raw).unwrap();
    let pool: Vec<Window> = raw.iter().map(|w| normalize(w, &stats)).collect();
    let model = init_model(ClassMap::new(BAND_CLASSES), 11 + version as u64).unwrap();
    let config = PackageConfig {
        version,
        ..PackageConfig::default()
    };
    package(&model, &stats, &pool, &config).unwrap().serialize().unwrap()
}

/// What the in-memory server double holds and how it misbehaves.
#[derive(Default)]
pub struct FakeServer {
    pub published: Option<(u32, Vec<u8>)>,
    pub events: Vec<InferenceEvent>,
    /// Every request fails with a connection error while set.
    pub down: bool,
    /// Uploads fail transiently this many more times.
    pub failing_uploads: usize,
    pub upload_keys: Vec<String>,
    pub uploads: Vec<(String, usize)>,
}

#[derive(Clone, Default)]
pub struct FakeApi(pub Arc<Mutex<FakeServer>>);

impl FakeApi {
    pub fn with<R>(&self, f: impl FnOnce(&mut FakeServer) -> R) -> R {
        f(&mut self.0.lock().unwrap())
    }

    fn up(&self) -> Result<(), TransportError> {
        if self.with(|s| s.down) {
            Err(TransportError::Connection("connection refused".into()))
        } else {
            Ok(())
        }
    }
}

impl DeviceApi for FakeApi {
    fn health(&mut self) -> Result<(), TransportError> {
        self.up()
    }

    fn check_device(&mut self) -> Result<(), TransportError> {
        self.up()
    }

    fn poll_firmware(&mut self, have: u32) -> Result<Option<(u32, Vec<u8>)>, TransportError> {
        self.up()?;
        Ok(self.with(|s| s.published.clone().filter(|(v, _)| *v > have)))
    }

    fn post_events(&mut self, events: &[InferenceEvent]) -> Result<(), TransportError> {
        self.up()?;
        self.with(|s| s.events.extend_from_slice(events));
        Ok(())
    }

    fn upload_recording(
        &mut self,
        class_name: &str,
        _rate_hz: f64,
        samples: &[[f64; 7]],
        key: &str,
    ) -> Result<RecordingReceipt, TransportError> {
        self.up()?;
        self.with(|s| {
            s.upload_keys.push(key.to_owned());
            if s.failing_uploads > 0 {
                s.failing_uploads -= 1;
                return Err(TransportError::Status {
                    status: 503,
                    code: "unavailable".into(),
                    message: "try later".into(),
                });
            }
            s.uploads.push((class_name.to_owned(), samples.len()));
            Ok(RecordingReceipt {
                recording_id: format!("r{}", s.uploads.len()),
                class_name: class_name.to_owned(),
                window_count: tinyfit_core::signal::window_count(samples.len()),
            })
        })
    }
}
