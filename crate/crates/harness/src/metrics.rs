//! CSV and snapshot emission. Every file starts with a `# config_hash=` line
//! and is written to a temporary name first, then renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hdus_core::framework::FrameworkKind;
use hdus_core::sim::metric;

use crate::error::HarnessError;
use crate::runner::{mean_std, RunReport};

pub const SUMMARY_HEADER: &str = "framework,mean_accuracy,std_accuracy,repeats";
pub const REPEATS_HEADER: &str = "framework,repeat,seed,final_accuracy,training_steps,recovery_steps";
pub const TIMELINE_HEADER: &str = "framework,round,t,mean_accuracy,std_accuracy,repeats";

/// Mean-accuracy trace of one framework, aggregated over repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct TimelineRow {
    pub framework: FrameworkKind,
    pub round: u32,
    /// Rounds relative to the unlearning request (`round` itself when none).
    pub t: i64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub repeats: usize,
}

pub fn timeline(report: &RunReport) -> Vec<TimelineRow> {
    let offset = report.config.unlearn.map_or(0, |u| u.round as i64);
    let mut rows = Vec::new();
    for kind in report.config.framework_kinds() {
        let per_repeat: Vec<Vec<(u32, f64)>> = report
            .repeats
            .iter()
            .map(|r| {
                r.log
                    .records()
                    .iter()
                    .filter(|x| x.framework == kind && x.client.is_none() && x.metric == metric::MEAN_ACCURACY)
                    .map(|x| (x.round, x.value))
                    .collect()
            })
            .collect();
        let Some(first) = per_repeat.first() else { continue };
        for (i, &(round, _)) in first.iter().enumerate() {
            let values: Vec<f64> = per_repeat.iter().filter_map(|s| s.get(i).map(|p| p.1)).collect();
            let (mean_accuracy, std_accuracy) = mean_std(&values);
            rows.push(TimelineRow {
                framework: kind,
                round,
                t: round as i64 - offset,
                mean_accuracy,
                std_accuracy,
                repeats: values.len(),
            });
        }
    }
    rows
}

fn hash_line(report: &RunReport) -> String {
    format!("# config_hash={}\n", report.config_hash)
}

pub fn summary_csv(report: &RunReport) -> String {
    let mut out = hash_line(report);
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for s in &report.summary {
        writeln!(out, "{},{},{},{}", s.framework, s.mean_accuracy, s.std_accuracy, s.repeats).unwrap();
    }
    out
}

pub fn repeats_csv(report: &RunReport) -> String {
    let mut out = hash_line(report);
    out.push_str(REPEATS_HEADER);
    out.push('\n');
    for r in &report.repeats {
        for o in &r.outcomes {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                o.framework, r.repeat, r.seed, o.final_accuracy, o.training_steps, o.recovery_steps
            )
            .unwrap();
        }
    }
    out
}

pub fn timeline_csv(report: &RunReport) -> String {
    let mut out = hash_line(report);
    out.push_str(TIMELINE_HEADER);
    out.push('\n');
    for r in timeline(report) {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.framework, r.round, r.t, r.mean_accuracy, r.std_accuracy, r.repeats
        )
        .unwrap();
    }
    out
}

/// The event log of one repeat, `round,client_id,framework,metric,value`.
pub fn events_csv(report: &RunReport, repeat: usize) -> Option<String> {
    let r = report.repeats.iter().find(|r| r.repeat == repeat)?;
    Some(hash_line(report) + &r.log.to_csv())
}

pub fn snapshot_text(report: &RunReport) -> String {
    hash_line(report) + &report.config.snapshot()
}

/// Writes `contents` next to `path` under a temporary name, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), HarnessError> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, contents).map_err(|e| HarnessError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

/// Writes `summary.csv`, `repeats.csv`, `timeline.csv`, `config.snapshot`
/// and one `events_r{k}.csv` per repeat into `dir`. Returns the paths written.
pub fn emit_metrics(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut files = vec![
        ("summary.csv".to_string(), summary_csv(report)),
        ("repeats.csv".to_string(), repeats_csv(report)),
        ("timeline.csv".to_string(), timeline_csv(report)),
        ("config.snapshot".to_string(), snapshot_text(report)),
    ];
    for r in &report.repeats {
        files.push((format!("events_r{}.csv", r.repeat), events_csv(report, r.repeat).unwrap()));
    }
    let mut written = Vec::with_capacity(files.len());
    for (name, text) in files {
        let path = dir.join(name);
        write_atomic(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}
