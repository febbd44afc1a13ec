//! IMU ingestion and preprocessing: resampling, windowing, normalization and
//! subject-level dataset slicing.

pub mod pamap2;
mod resample;
mod split;
mod stats;
pub mod synthetic;
pub mod twin;
mod window;
pub mod wisdm;

use std::path::PathBuf;

use thiserror::Error;

pub use pamap2::load_pamap2;
pub use resample::resample;
pub use split::{slice_dataset, slice_subjects, DatasetSplit};
pub use stats::{denormalize, fit_channel_stats, normalize, ChannelStats};
pub use window::{make_windows, window_count, windows_chain};
pub use wisdm::load_wisdm;

/// Sensor channels per sample: three accelerometer axes then three gyroscope axes.
pub const CHANNELS: usize = 6;
/// Rows per window: 3 s at 20 Hz.
pub const WINDOW_LEN: usize = 60;
/// Hop between consecutive windows (50% overlap).
pub const WINDOW_STRIDE: usize = 30;
/// Common rate every source is resampled to.
pub const TARGET_RATE_HZ: f64 = 20.0;
/// Lower bound applied to per-channel standard deviations.
pub const EPSILON_STD: f32 = 1e-6;

/// One window's samples, time-major: `rows[t][channel]`.
pub type WindowRows = [[f32; CHANNELS]; WINDOW_LEN];

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("recording has {0} samples; at least 2 are required")]
    EmptyRecording(usize),
    #[error("timestamps are not monotonically non-decreasing (sample {index})")]
    BadTimestamps { index: usize },
    #[error("sample rate must be positive and finite, got {0}")]
    BadRate(f64),
    #[error("windowing expects a {expected} Hz recording, got {actual} Hz")]
    RateMismatch { expected: f64, actual: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset has {0} subjects; at least 5 are required")]
    TooFewSubjects(usize),
    #[error("dataset not found at {}", .0.display())]
    DatasetNotFound(PathBuf),
    #[error("window is missing a class label")]
    MissingLabel,
    #[error("subject id {0:?} cannot be stored as a u16 index")]
    BadSubjectId(String),
    #[error("malformed windowed-dataset file: {0}")]
    MalformedTwin(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SignalError> = std::result::Result<T, E>;

/// A single IMU reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    /// Seconds since an arbitrary per-recording origin.
    pub t: f64,
    /// `[ax, ay, az, gx, gy, gz]` in dataset-native units.
    pub values: [f64; CHANNELS],
}

impl ImuSample {
    /// Returns `None` when the timestamp or any channel is not finite.
    pub fn new(t: f64, values: [f64; CHANNELS]) -> Option<Self> {
        (t.is_finite() && values.iter().all(|v| v.is_finite())).then_some(Self { t, values })
    }
}

/// A single-class, single-subject stream of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject_id: String,
    pub class_label: String,
    pub rate_hz: f64,
    pub samples: Vec<ImuSample>,
}

impl Recording {
    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }
}

/// One model input: 60 time steps by 6 channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    data: Box<WindowRows>,
    pub label: Option<String>,
    pub subject_id: String,
}

impl Window {
    pub fn new(data: Box<WindowRows>, label: Option<String>, subject_id: impl Into<String>) -> Result<Self> {
        if data.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SignalError::NonFinite("window"));
        }
        Ok(Self {
            data,
            label,
            subject_id: subject_id.into(),
        })
    }

    /// Builds a window from a flat time-major slice of exactly 360 values.
    pub fn from_flat(values: &[f32], label: Option<String>, subject_id: impl Into<String>) -> Result<Self> {
        if values.len() != WINDOW_LEN * CHANNELS {
            return Err(SignalError::MalformedTwin(format!(
                "expected {} values, got {}",
                WINDOW_LEN * CHANNELS,
                values.len()
            )));
        }
        let mut data = Box::new([[0f32; CHANNELS]; WINDOW_LEN]);
        for (row, chunk) in data.iter_mut().zip(values.chunks_exact(CHANNELS)) {
            row.copy_from_slice(chunk);
        }
        Self::new(data, label, subject_id)
    }

    pub fn rows(&self) -> &WindowRows {
        &self.data
    }

    /// The 360 values in time-major order.
    pub fn as_flat(&self) -> &[f32] {
        self.data.as_flattened()
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn flat(&self) -> impl Iterator<Item = f32> + '_ {
        self.data.iter().flatten().copied()
    }
}

/// Counts of rows that were dropped while reading a raw dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct IngestReport {
    pub files_read: usize,
    pub rows_read: usize,
    pub malformed_rows: usize,
    pub dropped_rows: usize,
}

/// Recordings plus the ingest bookkeeping from a raw dataset loader.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub recordings: Vec<Recording>,
    pub report: IngestReport,
}

impl LoadedDataset {
    pub fn subjects(&self) -> std::collections::BTreeSet<&str> {
        self.recordings.iter().map(|r| r.subject_id.as_str()).collect()
    }

    pub fn classes(&self) -> std::collections::BTreeSet<&str> {
        self.recordings.iter().map(|r| r.class_label.as_str()).collect()
    }
}

/// Splits a time-sorted sample stream wherever consecutive timestamps are
/// further apart than `max_gap` seconds. Sorting and de-duplication of equal
/// timestamps happen first.
pub(crate) fn split_on_gaps(mut samples: Vec<ImuSample>, max_gap: f64) -> Vec<Vec<ImuSample>> {
    samples.sort_by(|a, b| a.t.total_cmp(&b.t));
    samples.dedup_by(|b, a| a.t == b.t);
    let mut out = Vec::new();
    let mut current: Vec<ImuSample> = Vec::new();
    for s in samples {
        if let Some(last) = current.last() {
            if s.t - last.t > max_gap {
                out.push(std::mem::take(&mut current));
            }
        }
        current.push(s);
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// Turns raw multi-rate recordings into 20 Hz windows, skipping recordings
/// too short to resample.
pub fn windows_from_recordings(recordings: &[Recording]) -> Result<Vec<Window>> {
    let mut out = Vec::new();
    for rec in recordings {
        if rec.samples.len() < 2 {
            continue;
        }
        let resampled = resample(rec, TARGET_RATE_HZ)?;
        out.extend(make_windows(&resampled)?);
    }
    Ok(out)
}
