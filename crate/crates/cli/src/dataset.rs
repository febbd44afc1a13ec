use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tinyfit_core::signal::synthetic::{SyntheticConfig, SyntheticGenerator};
use tinyfit_core::signal::{load_pamap2, load_wisdm, windows_from_recordings, IngestReport, Recording, Window};
use tinyfit_core::ClassMap;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Wisdm,
    Pamap2,
    /// Seeded stand-in for the wristband's own recordings.
    Synthetic,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Wisdm => "wisdm",
            DatasetKind::Pamap2 => "pamap2",
            DatasetKind::Synthetic => "synthetic",
        }
    }
}

/// What `ingest` read and produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub dataset: DatasetKind,
    pub recordings: usize,
    pub windows: usize,
    pub subjects: usize,
    /// Windows per class.
    pub class_windows: BTreeMap<String, usize>,
    pub files_read: usize,
    pub rows_read: usize,
    pub malformed_rows: usize,
    pub dropped_rows: usize,
}

pub fn load_recordings(
    kind: DatasetKind,
    path: Option<&Path>,
    synthetic: &SyntheticConfig,
) -> Result<(Vec<Recording>, IngestReport)> {
    let need_path = || path.ok_or_else(|| CliError::Usage(format!("--path is required for {}", kind.name())));
    Ok(match kind {
        DatasetKind::Wisdm => {
            let d = load_wisdm(need_path()?)?;
            (d.recordings, d.report)
        }
        DatasetKind::Pamap2 => {
            let d = load_pamap2(need_path()?)?;
            (d.recordings, d.report)
        }
        DatasetKind::Synthetic => (
            SyntheticGenerator::new(synthetic.clone()).dataset(),
            IngestReport::default(),
        ),
    })
}

/// Loads a dataset and cuts it into 20 Hz windows. Classes are sorted by name.
pub fn ingest(
    kind: DatasetKind,
    path: Option<&Path>,
    synthetic: &SyntheticConfig,
) -> Result<(ClassMap, Vec<Window>, IngestSummary)> {
    let (recordings, report) = load_recordings(kind, path, synthetic)?;
    let windows = windows_from_recordings(&recordings)?;
    if windows.is_empty() {
        return Err(CliError::Usage(format!("{} produced no windows", kind.name())));
    }
    let mut class_windows = BTreeMap::new();
    for w in &windows {
        *class_windows
            .entry(w.label().unwrap_or_default().to_owned())
            .or_insert(0) += 1;
    }
    let classes = ClassMap::sorted(class_windows.keys());
    let subjects = windows
        .iter()
        .map(|w| w.subject_id.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    let summary = IngestSummary {
        dataset: kind,
        recordings: recordings.len(),
        windows: windows.len(),
        subjects,
        class_windows,
        files_read: report.files_read,
        rows_read: report.rows_read,
        malformed_rows: report.malformed_rows,
        dropped_rows: report.dropped_rows,
    };
    Ok((classes, windows, summary))
}
