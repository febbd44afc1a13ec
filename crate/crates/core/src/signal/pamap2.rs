//! Reader for the PAMAP2 protocol recordings (`Protocol/subject10N.dat`).
//!
//! Each row has 54 space-separated columns: timestamp, activity id, heart
//! rate, then three 17-column IMU blocks (hand, chest, ankle). Within the hand
//! block, columns 4..7 hold the ±16 g accelerometer and 10..13 the gyroscope.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{split_on_gaps, ImuSample, IngestReport, LoadedDataset, Recording, Result, SignalError};

pub const NATIVE_RATE_HZ: f64 = 100.0;

/// The twelve protocol activities. Id 0 marks transient periods.
pub const ACTIVITIES: [(u32, &str); 12] = [
    (1, "lying"),
    (2, "sitting"),
    (3, "standing"),
    (4, "walking"),
    (5, "running"),
    (6, "cycling"),
    (7, "nordic_walking"),
    (12, "ascending_stairs"),
    (13, "descending_stairs"),
    (16, "vacuum_cleaning"),
    (17, "ironing"),
    (24, "rope_jumping"),
];

const COLUMNS: usize = 54;
const HAND_ACC16: [usize; 3] = [4, 5, 6];
const HAND_GYRO: [usize; 3] = [10, 11, 12];
const MAX_GAP_S: f64 = 1.0;

fn protocol_dir(root: &Path) -> Option<PathBuf> {
    [
        root.join("Protocol"),
        root.join("PAMAP2_Dataset/Protocol"),
        root.to_owned(),
    ]
    .into_iter()
    .find(|p| p.is_dir() && subject_files(p).map(|f| !f.is_empty()).unwrap_or(false))
}

fn subject_files(dir: &Path) -> std::io::Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(id) = name.strip_prefix("subject").and_then(|r| r.strip_suffix(".dat")) {
            if !id.is_empty() && id.chars().all(|c| c.is_ascii_digit()) {
                out.push((id.to_owned(), path));
            }
        }
    }
    out.sort();
    Ok(out)
}

enum Row {
    Sample { activity: u32, sample: ImuSample },
    Transient,
    Missing,
}

fn parse_row(line: &str) -> Option<Row> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != COLUMNS {
        return None;
    }
    let t: f64 = fields[0].parse().ok()?;
    let activity: u32 = fields[1].parse().ok()?;
    if !t.is_finite() {
        return None;
    }
    if activity == 0 {
        return Some(Row::Transient);
    }
    let mut values = [0.0; 6];
    for (slot, &col) in values.iter_mut().zip(HAND_ACC16.iter().chain(&HAND_GYRO)) {
        *slot = fields[col].parse().ok()?;
    }
    Some(match ImuSample::new(t, values) {
        Some(sample) => Row::Sample { activity, sample },
        None => Row::Missing,
    })
}

fn load_subject(subject: &str, path: &Path) -> Result<(Vec<Recording>, IngestReport)> {
    let text = std::fs::read_to_string(path)?;
    let mut report = IngestReport {
        files_read: 1,
        ..Default::default()
    };
    // Contiguous runs of one activity form a recording.
    let mut runs: Vec<(u32, Vec<ImuSample>)> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        report.rows_read += 1;
        match parse_row(line) {
            None => report.malformed_rows += 1,
            Some(Row::Transient) | Some(Row::Missing) => report.dropped_rows += 1,
            Some(Row::Sample { activity, sample }) => {
                if !ACTIVITIES.iter().any(|(id, _)| *id == activity) {
                    report.dropped_rows += 1;
                    continue;
                }
                match runs.last_mut() {
                    Some((a, samples)) if *a == activity => samples.push(sample),
                    _ => runs.push((activity, vec![sample])),
                }
            }
        }
    }
    let mut recordings = Vec::new();
    for (activity, samples) in runs {
        let name = ACTIVITIES
            .iter()
            .find(|(id, _)| *id == activity)
            .map(|(_, n)| *n)
            .unwrap();
        for segment in split_on_gaps(samples, MAX_GAP_S) {
            if segment.len() < 2 {
                continue;
            }
            recordings.push(Recording {
                subject_id: subject.to_owned(),
                class_label: name.to_owned(),
                rate_hz: NATIVE_RATE_HZ,
                samples: segment,
            });
        }
    }
    // Stable sort keeps time order within a class.
    recordings.sort_by(|a, b| a.class_label.cmp(&b.class_label));
    Ok((recordings, report))
}

/// Loads the wrist IMU accelerometer and gyroscope of every protocol subject
/// at the native 100 Hz. Transient rows and rows with missing values are dropped.
pub fn load_pamap2(path: impl AsRef<Path>) -> Result<LoadedDataset> {
    let root = path.as_ref();
    let dir = protocol_dir(root).ok_or_else(|| SignalError::DatasetNotFound(root.to_owned()))?;
    let files = subject_files(&dir)?;
    let parts: Vec<Result<(Vec<Recording>, IngestReport)>> =
        files.par_iter().map(|(id, path)| load_subject(id, path)).collect();
    let mut recordings = Vec::new();
    let mut report = IngestReport::default();
    for part in parts {
        let (recs, r) = part?;
        recordings.extend(recs);
        report.files_read += r.files_read;
        report.rows_read += r.rows_read;
        report.malformed_rows += r.malformed_rows;
        report.dropped_rows += r.dropped_rows;
    }
    Ok(LoadedDataset { recordings, report })
}
