use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use tinyfit_core::runtime::DEFAULT_ARENA_BYTES;

use crate::error::{DeviceError, Result};

/// Where the simulated wrist stream comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConfig {
    /// Windows of a TWIN file, optionally restricted to one subject.
    Twin {
        path: PathBuf,
        #[serde(default)]
        subject: Option<String>,
    },
    /// `t, ax, ay, az, gx, gy, gz` per line at any rate.
    Csv { path: PathBuf },
    /// Seeded synthetic wearer cycling through the classes, or holding `class`.
    Synthetic {
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        subject: usize,
        #[serde(default)]
        class: Option<String>,
        #[serde(default = "default_segment_seconds")]
        segment_seconds: f64,
    },
}

fn default_segment_seconds() -> f64 {
    30.0
}

fn default_server() -> String {
    "http://127.0.0.1:8080".into()
}

fn default_poll_interval() -> f64 {
    5.0
}

fn default_time_scale() -> f64 {
    1.0
}

fn default_event_capacity() -> usize {
    crate::device::DEFAULT_EVENT_CAPACITY
}

fn default_arena() -> usize {
    DEFAULT_ARENA_BYTES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub device_id: String,
    pub token: String,
    /// Base URL of the server, e.g. `http://127.0.0.1:8080`.
    #[serde(default = "default_server")]
    pub server: String,
    #[serde(default = "default_poll_interval")]
    pub poll_interval_s: f64,
    pub source: SourceConfig,
    /// 1.0 streams in real time; larger values run faster.
    #[serde(default = "default_time_scale")]
    pub time_scale: f64,
    /// Bundle to run until the server publishes one.
    #[serde(default)]
    pub initial_bundle: Option<PathBuf>,
    /// JSON-lines event log; omitted means no log file.
    #[serde(default)]
    pub event_log: Option<PathBuf>,
    /// Undelivered events kept during an outage before the oldest are dropped.
    #[serde(default = "default_event_capacity")]
    pub event_capacity: usize,
    #[serde(default = "default_arena")]
    pub arena_bytes: usize,
    /// Stop after this many samples; runs until the source ends otherwise.
    #[serde(default)]
    pub max_samples: Option<u64>,
}

impl DeviceConfig {
    pub fn new(device_id: impl Into<String>, token: impl Into<String>, source: SourceConfig) -> Self {
        Self {
            device_id: device_id.into(),
            token: token.into(),
            server: default_server(),
            poll_interval_s: default_poll_interval(),
            source,
            time_scale: default_time_scale(),
            initial_bundle: None,
            event_log: None,
            event_capacity: default_event_capacity(),
            arena_bytes: default_arena(),
            max_samples: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DeviceError::Config(m));
        if self.device_id.trim().is_empty() {
            return bad("device_id must not be empty".into());
        }
        if !(self.poll_interval_s.is_finite() && self.poll_interval_s > 0.0) {
            return bad(format!(
                "poll_interval_s must be positive, got {}",
                self.poll_interval_s
            ));
        }
        if !(self.time_scale.is_finite() && self.time_scale > 0.0) {
            return bad(format!("time_scale must be positive, got {}", self.time_scale));
        }
        if self.event_capacity == 0 {
            return bad("event_capacity must be at least 1".into());
        }
        if let SourceConfig::Synthetic { segment_seconds, .. } = self.source {
            if !(segment_seconds.is_finite() && segment_seconds >= 3.0) {
                return bad(format!("segment_seconds must be at least 3, got {segment_seconds}"));
            }
        }
        Ok(())
    }

    pub fn poll_interval_ms(&self) -> u64 {
        (self.poll_interval_s * 1e3).round().max(1.0) as u64
    }
}
