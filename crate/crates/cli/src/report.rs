//! Human-readable tables and JSON files for command results.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::dataset::IngestSummary;
use crate::error::{io_err, Result};
use crate::experiment::{GeneralizedReport, PackageReport, PersonalizedReport};

pub trait Render {
    fn table(&self) -> String;
}

fn pct(x: f64) -> String {
    format!("{:.2}%", x * 100.0)
}

impl Render for IngestSummary {
    fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "dataset        {}", self.dataset.name());
        let _ = writeln!(s, "recordings     {}", self.recordings);
        let _ = writeln!(s, "subjects       {}", self.subjects);
        let _ = writeln!(s, "windows        {}", self.windows);
        let _ = writeln!(
            s,
            "rows read      {} ({} malformed, {} dropped)",
            self.rows_read, self.malformed_rows, self.dropped_rows
        );
        let _ = writeln!(s, "\n{:<24}{:>8}", "class", "windows");
        for (c, n) in &self.class_windows {
            let _ = writeln!(s, "{c:<24}{n:>8}");
        }
        s
    }
}

impl Render for GeneralizedReport {
    fn table(&self) -> String {
        let mut s = String::new();
        if let Some(d) = &self.dataset {
            let _ = writeln!(s, "dataset              {d}");
        }
        let _ = writeln!(s, "classes              {}", self.classes.len());
        let _ = writeln!(s, "generalized subjects {}", self.generalized_subjects.len());
        let _ = writeln!(s, "personalized users   {}", self.personalized_subjects.join(", "));
        let _ = writeln!(s, "train / test windows {} / {}", self.train_windows, self.test_windows);
        if let (Some(first), Some(last)) = (self.history.first(), self.history.last()) {
            let _ = writeln!(
                s,
                "loss                 {:.4} -> {:.4} over {} epochs",
                first.loss,
                last.loss,
                self.history.len()
            );
        }
        let _ = writeln!(s, "GS accuracy          {}", pct(self.gs_accuracy));
        s
    }
}

impl Render for PersonalizedReport {
    fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<10}{:>9}{:>9}{:>10}{:>10}  excluded",
            "user", "windows", "tuned", "PS-GM", "PS-PM"
        );
        for u in &self.users {
            let excluded = if u.excluded.is_empty() {
                "-".to_owned()
            } else {
                u.excluded
                    .iter()
                    .map(|(c, n)| format!("{c} ({n})"))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            let _ = writeln!(
                s,
                "{:<10}{:>9}{:>9}{:>10}{:>10}  {excluded}",
                u.subject_id,
                u.windows,
                u.finetune_windows,
                pct(u.ps_gm),
                pct(u.ps_pm)
            );
        }
        for skipped in &self.skipped_users {
            let _ = writeln!(s, "{skipped:<10} skipped: fewer than two classes with enough examples");
        }
        let _ = writeln!(s, "{:<28}{:>10}{:>10}", "average", pct(self.ps_gm), pct(self.ps_pm));
        if let (Some(gs), Some(drop)) = (self.gs, self.gs_to_ps_gm_drop) {
            let _ = writeln!(
                s,
                "GS {} -> PS-GM {}: relative drop {}",
                pct(gs),
                pct(self.ps_gm),
                pct(drop)
            );
        }
        let _ = writeln!(s, "PS-GM -> PS-PM: relative gain {}", pct(self.personalization_gain));
        s
    }
}

impl Render for PackageReport {
    fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "classes          {}", self.classes);
        let _ = writeln!(s, "version          {}", self.version);
        let _ = writeln!(
            s,
            "bundle size      {} bytes (limit {})",
            self.bundle_bytes, self.size_limit
        );
        let _ = writeln!(s, "dense sparsity   {}", pct(self.sparsity));
        let _ = writeln!(
            s,
            "arena            {} model + {} scratch = {} of {} bytes",
            self.arena_model_bytes, self.arena_scratch_bytes, self.arena_high_water, self.arena_capacity
        );
        let _ = writeln!(s, "MACs / inference {}", self.macs);
        let _ = writeln!(
            s,
            "mean latency     {:.4} ms over {} runs",
            self.mean_latency_ms, self.latency_runs
        );
        if let Some(f) = &self.fidelity {
            let _ = writeln!(
                s,
                "fidelity         {} windows: agreement {}, float {}, int8 {}, drop {}",
                f.windows,
                pct(f.agreement),
                pct(f.float_accuracy),
                pct(f.int_accuracy),
                pct(f.accuracy_drop)
            );
        }
        s
    }
}

/// Writes `<name>.json` and `<name>.txt` into `dir` and returns the table.
pub fn write_report<T: Serialize + Render>(dir: &Path, name: &str, report: &T) -> Result<(String, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let table = report.table();
    let json_path = dir.join(format!("{name}.json"));
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    std::fs::write(&json_path, json).map_err(io_err(&json_path))?;
    let txt_path = dir.join(format!("{name}.txt"));
    std::fs::write(&txt_path, &table).map_err(io_err(&txt_path))?;
    Ok((table, json_path))
}
