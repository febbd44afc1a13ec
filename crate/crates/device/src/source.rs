use std::path::Path;

use tinyfit_core::signal::synthetic::{SyntheticConfig, SyntheticGenerator};
use tinyfit_core::signal::{
    resample, twin, windows_chain, ImuSample, Recording, Window, CHANNELS, TARGET_RATE_HZ, WINDOW_STRIDE,
};

use crate::config::SourceConfig;
use crate::error::{DeviceError, Result};

/// A 20 Hz stream of raw six-channel samples.
pub trait SampleSource: Send {
    fn next_sample(&mut self) -> Option<[f32; CHANNELS]>;
}

pub fn open_source(config: &SourceConfig) -> Result<Box<dyn SampleSource>> {
    Ok(match config {
        SourceConfig::Twin { path, subject } => Box::new(TwinSource::open(path, subject.as_deref())?),
        SourceConfig::Csv { path } => Box::new(CsvSource::open(path)?),
        SourceConfig::Synthetic {
            seed,
            subject,
            class,
            segment_seconds,
        } => Box::new(SyntheticSource::new(
            *seed,
            *subject,
            class.as_deref(),
            *segment_seconds,
        )?),
    })
}

/// Replays the windows of a TWIN file as a continuous stream. A window that
/// continues the previous one (same subject and label, first half equal to the
/// previous second half) contributes only its 30 new rows, so a windowed
/// recording replays as the original samples.
pub struct TwinSource {
    rows: std::vec::IntoIter<[f32; CHANNELS]>,
}

impl TwinSource {
    pub fn open(path: impl AsRef<Path>, subject: Option<&str>) -> Result<Self> {
        let (_, windows) = twin::read(path)?;
        let windows: Vec<Window> = windows
            .into_iter()
            .filter(|w| subject.is_none_or(|s| w.subject_id == s))
            .collect();
        Ok(Self::from_windows(&windows))
    }

    pub fn from_windows(windows: &[Window]) -> Self {
        let mut rows = Vec::new();
        let mut prev: Option<&Window> = None;
        for w in windows {
            let continues = prev.is_some_and(|p| windows_chain(p, w));
            let skip = if continues { WINDOW_STRIDE } else { 0 };
            rows.extend_from_slice(&w.rows()[skip..]);
            prev = Some(w);
        }
        Self { rows: rows.into_iter() }
    }
}

impl SampleSource for TwinSource {
    fn next_sample(&mut self) -> Option<[f32; CHANNELS]> {
        self.rows.next()
    }
}

/// A raw CSV recording resampled to 20 Hz. A non-numeric first line is
/// treated as a header.
pub struct CsvSource {
    rows: std::vec::IntoIter<[f32; CHANNELS]>,
}

impl CsvSource {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DeviceError::Read {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut samples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: Option<Vec<f64>> = fields.iter().map(|f| f.parse().ok()).collect();
            let csv_err = |reason: String| DeviceError::Csv { line: i + 1, reason };
            let Some(values) = parsed else {
                if samples.is_empty() && i == 0 {
                    continue;
                }
                return Err(csv_err(format!("non-numeric field in {line:?}")));
            };
            if values.len() != 1 + CHANNELS {
                return Err(csv_err(format!("expected 7 fields, got {}", values.len())));
            }
            let sample = ImuSample::new(values[0], values[1..].try_into().expect("6 values"))
                .ok_or_else(|| csv_err("non-finite value".into()))?;
            samples.push(sample);
        }
        if samples.len() < 2 {
            return Err(DeviceError::Csv {
                line: text.lines().count(),
                reason: format!("need at least 2 samples, got {}", samples.len()),
            });
        }
        let rec = Recording {
            subject_id: "csv".into(),
            class_label: String::new(),
            rate_hz: 0.0,
            samples,
        };
        let rec = resample(&rec, TARGET_RATE_HZ)?;
        let rows: Vec<[f32; CHANNELS]> = rec.samples.iter().map(|s| s.values.map(|v| v as f32)).collect();
        Ok(Self { rows: rows.into_iter() })
    }
}

impl SampleSource for CsvSource {
    fn next_sample(&mut self) -> Option<[f32; CHANNELS]> {
        self.rows.next()
    }
}

/// Endless synthetic wearer. Each segment is one fresh recording; segments
/// cycle through the classes unless a class is fixed.
pub struct SyntheticSource {
    generator: SyntheticGenerator,
    subject: usize,
    class: Option<usize>,
    segment_seconds: f64,
    segment: usize,
    buffer: std::vec::IntoIter<[f32; CHANNELS]>,
    current: usize,
}

impl SyntheticSource {
    pub fn new(seed: u64, subject: usize, class: Option<&str>, segment_seconds: f64) -> Result<Self> {
        let config = SyntheticConfig {
            subjects: subject + 1,
            seed,
            rate_hz: TARGET_RATE_HZ,
            ..SyntheticConfig::default()
        };
        let class = match class {
            None => None,
            Some(name) => Some(
                config
                    .classes
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| DeviceError::Config(format!("unknown synthetic class {name:?}")))?,
            ),
        };
        Ok(Self {
            generator: SyntheticGenerator::new(config),
            subject,
            class,
            segment_seconds,
            segment: 0,
            buffer: Vec::new().into_iter(),
            current: 0,
        })
    }

    /// Label of the segment the last sample came from.
    pub fn current_class(&self) -> &str {
        &self.generator.config().classes[self.current]
    }

    fn refill(&mut self) {
        let classes = self.generator.config().classes.len();
        self.current = self.class.unwrap_or(self.segment % classes);
        let rec = self.generator.recording_with(
            self.subject,
            self.current,
            self.segment,
            self.segment_seconds,
            TARGET_RATE_HZ,
        );
        self.segment += 1;
        let rows: Vec<[f32; CHANNELS]> = rec.samples.iter().map(|s| s.values.map(|v| v as f32)).collect();
        self.buffer = rows.into_iter();
    }
}

impl SampleSource for SyntheticSource {
    fn next_sample(&mut self) -> Option<[f32; CHANNELS]> {
        if let Some(row) = self.buffer.next() {
            return Some(row);
        }
        self.refill();
        self.buffer.next()
    }
}
