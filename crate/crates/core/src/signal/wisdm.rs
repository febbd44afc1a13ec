//! Reader for the raw smartwatch streams of the WISDM activity dataset
//! (`raw/watch/{accel,gyro}/data_<subject>_<sensor>_watch.txt`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{split_on_gaps, ImuSample, IngestReport, LoadedDataset, Recording, Result, SignalError, TARGET_RATE_HZ};

/// Activity codes of the dataset and the names used as class labels. Code `N`
/// is unused by the dataset.
pub const ACTIVITIES: [(char, &str); 18] = [
    ('A', "walking"),
    ('B', "jogging"),
    ('C', "stairs"),
    ('D', "sitting"),
    ('E', "standing"),
    ('F', "typing"),
    ('G', "brushing_teeth"),
    ('H', "eating_soup"),
    ('I', "eating_chips"),
    ('J', "eating_pasta"),
    ('K', "drinking"),
    ('L', "eating_sandwich"),
    ('M', "kicking"),
    ('O', "playing_catch"),
    ('P', "dribbling"),
    ('Q', "writing"),
    ('R', "clapping"),
    ('S', "folding_clothes"),
];

const MAX_GAP_S: f64 = 1.0;

type Triplet = (f64, [f64; 3]);

fn activity_name(code: &str) -> Option<&'static str> {
    let mut chars = code.chars();
    let c = chars.next()?;
    if chars.next().is_some() {
        return None;
    }
    ACTIVITIES.iter().find(|(k, _)| *k == c).map(|(_, n)| *n)
}

/// Locates the `watch` directory under any of the layouts the archive unpacks to.
fn watch_dir(root: &Path) -> Option<PathBuf> {
    [
        root.join("raw/watch"),
        root.join("wisdm-dataset/raw/watch"),
        root.join("watch"),
    ]
    .into_iter()
    .find(|p| p.join("accel").is_dir() && p.join("gyro").is_dir())
}

fn subject_of(file: &Path, sensor: &str) -> Option<String> {
    let name = file.file_name()?.to_str()?;
    let rest = name.strip_prefix("data_")?;
    let id = rest.strip_suffix(&format!("_{sensor}_watch.txt"))?;
    id.chars().all(|c| c.is_ascii_digit()).then(|| id.to_owned())
}

fn list_sensor_files(dir: &Path, sensor: &str) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if let Some(subject) = subject_of(&path, sensor) {
            out.insert(subject, path);
        }
    }
    Ok(out)
}

/// Parses one sensor file into per-activity sample lists.
fn parse_sensor_file(path: &Path, report: &mut IngestReport) -> Result<BTreeMap<&'static str, Vec<Triplet>>> {
    let text = std::fs::read_to_string(path)?;
    report.files_read += 1;
    let mut out: BTreeMap<&'static str, Vec<Triplet>> = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim().trim_end_matches(';').trim();
        if line.is_empty() {
            continue;
        }
        report.rows_read += 1;
        match parse_row(line) {
            Some((activity, t, v)) => out.entry(activity).or_default().push((t, v)),
            None => report.malformed_rows += 1,
        }
    }
    Ok(out)
}

fn parse_row(line: &str) -> Option<(&'static str, f64, [f64; 3])> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 6 {
        return None;
    }
    let activity = activity_name(fields[1])?;
    let ts_ns: i64 = fields[2].parse().ok()?;
    let mut v = [0f64; 3];
    for (slot, f) in v.iter_mut().zip(&fields[3..]) {
        *slot = f.parse().ok()?;
    }
    let t = ts_ns as f64 * 1e-9;
    (t.is_finite() && v.iter().all(|x| x.is_finite())).then_some((activity, t, v))
}

/// Linear interpolation of a sorted triplet stream at sorted query times.
fn interpolate(stream: &[Triplet], times: &[f64]) -> Vec<[f64; 3]> {
    let mut j = 0;
    times
        .iter()
        .map(|&t| {
            while j + 1 < stream.len() && stream[j + 1].0 <= t {
                j += 1;
            }
            let (ta, a) = stream[j];
            if j + 1 == stream.len() || ta >= t {
                return a;
            }
            let (tb, b) = stream[j + 1];
            let u = (t - ta) / (tb - ta);
            [
                a[0] + (b[0] - a[0]) * u,
                a[1] + (b[1] - a[1]) * u,
                a[2] + (b[2] - a[2]) * u,
            ]
        })
        .collect()
}

fn to_samples(triplets: Vec<Triplet>) -> Vec<ImuSample> {
    triplets
        .into_iter()
        .map(|(t, v)| ImuSample {
            t,
            values: [v[0], v[1], v[2], 0.0, 0.0, 0.0],
        })
        .collect()
}

fn from_samples(samples: &[ImuSample]) -> Vec<Triplet> {
    samples
        .iter()
        .map(|s| (s.t, [s.values[0], s.values[1], s.values[2]]))
        .collect()
}

/// Joins accelerometer and gyroscope segments of one (subject, activity) on a
/// shared 20 Hz grid covering their overlap.
fn join_streams(subject: &str, activity: &str, accel: Vec<Triplet>, gyro: Vec<Triplet>) -> Vec<Recording> {
    let accel_segments = split_on_gaps(to_samples(accel), MAX_GAP_S);
    let gyro_segments = split_on_gaps(to_samples(gyro), MAX_GAP_S);
    let mut out = Vec::new();
    for a in &accel_segments {
        for g in &gyro_segments {
            let start = a[0].t.max(g[0].t);
            let end = a[a.len() - 1].t.min(g[g.len() - 1].t);
            if end - start < 1.0 / TARGET_RATE_HZ {
                continue;
            }
            let n = ((end - start) * TARGET_RATE_HZ + 1e-9).floor() as usize + 1;
            let grid: Vec<f64> = (0..n).map(|k| start + k as f64 / TARGET_RATE_HZ).collect();
            let av = interpolate(&from_samples(a), &grid);
            let gv = interpolate(&from_samples(g), &grid);
            let t0 = grid[0];
            let samples = grid
                .iter()
                .zip(av.iter().zip(&gv))
                .map(|(&t, (a, g))| ImuSample {
                    t: t - t0,
                    values: [a[0], a[1], a[2], g[0], g[1], g[2]],
                })
                .collect();
            out.push(Recording {
                subject_id: subject.to_owned(),
                class_label: activity.to_owned(),
                rate_hz: TARGET_RATE_HZ,
                samples,
            });
        }
    }
    out
}

/// Loads the smartwatch accelerometer and gyroscope streams, joined per
/// (subject, activity). Recordings are ordered by subject id, then class.
pub fn load_wisdm(path: impl AsRef<Path>) -> Result<LoadedDataset> {
    let root = path.as_ref();
    let watch = watch_dir(root).ok_or_else(|| SignalError::DatasetNotFound(root.to_owned()))?;
    let accel_files = list_sensor_files(&watch.join("accel"), "accel")?;
    let gyro_files = list_sensor_files(&watch.join("gyro"), "gyro")?;
    if accel_files.is_empty() {
        return Err(SignalError::DatasetNotFound(watch.join("accel")));
    }

    let subjects: Vec<(&String, &PathBuf, Option<&PathBuf>)> =
        accel_files.iter().map(|(s, p)| (s, p, gyro_files.get(s))).collect();

    let per_subject: Vec<Result<(Vec<Recording>, IngestReport)>> = subjects
        .par_iter()
        .map(|(subject, accel_path, gyro_path)| {
            let mut report = IngestReport::default();
            let Some(gyro_path) = gyro_path else {
                return Ok((Vec::new(), report));
            };
            let mut accel = parse_sensor_file(accel_path, &mut report)?;
            let mut gyro = parse_sensor_file(gyro_path, &mut report)?;
            let mut recs = Vec::new();
            for (_, activity) in ACTIVITIES {
                if let (Some(a), Some(g)) = (accel.remove(activity), gyro.remove(activity)) {
                    recs.extend(join_streams(subject, activity, a, g));
                }
            }
            recs.sort_by(|x, y| x.class_label.cmp(&y.class_label));
            Ok((recs, report))
        })
        .collect();

    let mut recordings = Vec::new();
    let mut report = IngestReport::default();
    for part in per_subject {
        let (recs, r) = part?;
        recordings.extend(recs);
        report.files_read += r.files_read;
        report.rows_read += r.rows_read;
        report.malformed_rows += r.malformed_rows;
        report.dropped_rows += r.dropped_rows;
    }
    Ok(LoadedDataset { recordings, report })
}
