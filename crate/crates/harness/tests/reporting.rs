mod common;

use std::collections::BTreeMap;
use std::path::Path;

use common::small;
use hdus_core::framework::FrameworkKind;
use hdus_harness::config::UnlearnConfig;
use hdus_harness::metrics::{REPEATS_HEADER, SUMMARY_HEADER, TIMELINE_HEADER};
use hdus_harness::runner::mean_std;
use hdus_harness::{emit_metrics, run_experiment, sweep, HarnessError, SweepParam};

fn reader(path: &Path) -> csv::Reader<std::fs::File> {
    csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).unwrap()
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    reader(path).records().map(|r| r.unwrap()).collect()
}

#[test]
fn fixed_seed_runs_are_identical() {
    let cfg = small();
    assert_eq!(run_experiment(&cfg).unwrap(), run_experiment(&cfg).unwrap());
}

#[test]
fn reemitting_gives_byte_identical_files() {
    let report = run_experiment(&small()).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = emit_metrics(&report, a.path()).unwrap();
    let snapshot: Vec<Vec<u8>> = first.iter().map(|p| std::fs::read(p).unwrap()).collect();
    emit_metrics(&report, a.path()).unwrap();
    let second = emit_metrics(&report, b.path()).unwrap();
    for ((p, before), q) in first.iter().zip(&snapshot).zip(&second) {
        let now = std::fs::read(p).unwrap();
        assert_eq!(&now, before, "{}", p.display());
        assert_eq!(now, std::fs::read(q).unwrap());
        let text = String::from_utf8(now).unwrap();
        assert_eq!(text.lines().next().unwrap(), format!("# config_hash={}", report.config_hash));
    }
    let names: Vec<_> = first.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert!(names.contains(&"summary.csv".into()));
    assert!(names.contains(&"timeline.csv".into()));
    assert!(names.contains(&"config.snapshot".into()));
    assert!(std::fs::read_dir(a.path()).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
}

#[test]
fn csv_parses_back_to_report_values() {
    let report = run_experiment(&small()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_metrics(&report, dir.path()).unwrap();

    let mut summary = reader(&dir.path().join("summary.csv"));
    assert_eq!(summary.headers().unwrap().iter().collect::<Vec<_>>().join(","), SUMMARY_HEADER);
    let parsed: Vec<_> = summary.records().map(|r| r.unwrap()).collect();
    assert_eq!(parsed.len(), report.summary.len());
    for (row, s) in parsed.iter().zip(&report.summary) {
        assert_eq!(row[0].parse::<FrameworkKind>().unwrap(), s.framework);
        assert_eq!(row[1].parse::<f64>().unwrap(), s.mean_accuracy);
        assert_eq!(row[2].parse::<f64>().unwrap(), s.std_accuracy);
        assert_eq!(row[3].parse::<usize>().unwrap(), s.repeats);
    }

    let mut repeats = reader(&dir.path().join("repeats.csv"));
    assert_eq!(repeats.headers().unwrap().iter().collect::<Vec<_>>().join(","), REPEATS_HEADER);
    let n = repeats.records().count();
    assert_eq!(n, report.repeats.len() * report.config.frameworks.len());

    let mut timeline = reader(&dir.path().join("timeline.csv"));
    assert_eq!(timeline.headers().unwrap().iter().collect::<Vec<_>>().join(","), TIMELINE_HEADER);
}

#[test]
fn summary_matches_per_repeat_rows() {
    let mut cfg = small();
    cfg.repeats = 3;
    let report = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_metrics(&report, dir.path()).unwrap();
    let mut per: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for row in rows(&dir.path().join("repeats.csv")) {
        per.entry(row[0].to_string()).or_default().push(row[3].parse().unwrap());
    }
    for row in rows(&dir.path().join("summary.csv")) {
        let (mean, std) = mean_std(&per[&row[0]]);
        assert!((row[1].parse::<f64>().unwrap() - mean).abs() <= 1e-12);
        assert!((row[2].parse::<f64>().unwrap() - std).abs() <= 1e-12);
        assert_eq!(row[3].parse::<usize>().unwrap(), 3);
    }
}

#[test]
fn unlearning_timeline_has_both_segments() {
    let mut cfg = small();
    cfg.rounds = 6;
    cfg.unlearn = Some(UnlearnConfig { client: 2, round: 3 });
    let report = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_metrics(&report, dir.path()).unwrap();
    let mut ts: BTreeMap<String, Vec<i64>> = BTreeMap::new();
    for row in rows(&dir.path().join("timeline.csv")) {
        ts.entry(row[0].to_string()).or_default().push(row[2].parse().unwrap());
    }
    assert_eq!(ts.len(), cfg.frameworks.len());
    for (fw, t) in ts {
        assert_eq!(t, vec![-3, -2, -1, 0, 1, 2, 3], "{fw}");
    }

    let mut active: BTreeMap<i64, f64> = BTreeMap::new();
    for row in rows(&dir.path().join("events_r0.csv")) {
        if &row[2] == "hdus" && &row[3] == "active_clients" {
            active.insert(row[0].parse().unwrap(), row[4].parse().unwrap());
        }
    }
    assert_eq!(active[&2], 4.0);
    assert_eq!(active[&3], 3.0);
}

#[test]
fn lambda_grid_gives_one_row_per_cell_and_framework() {
    let mut cfg = small();
    cfg.repeats = 1;
    let values = [0.0, 0.2, 0.4, 0.6, 0.8];
    let cells = sweep(&cfg, SweepParam::Lambda, &values);
    assert_eq!(cells.len(), 5);
    let csv_text = hdus_harness::sweep::sweep_csv(&cfg.hash(), SweepParam::Lambda, &cells);
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(csv_text.as_bytes());
    assert_eq!(r.records().count(), 5 * cfg.frameworks.len());

    // with λ = 0 the ensemble is the main model alone
    let zero = cells[0].outcome.as_ref().unwrap();
    assert_eq!(
        zero.summary_for(FrameworkKind::Hdus).unwrap().mean_accuracy,
        zero.summary_for(FrameworkKind::Isgd).unwrap().mean_accuracy
    );
}

#[test]
fn single_temperature_sweep_equals_plain_run() {
    let mut cfg = small();
    cfg.repeats = 1;
    let cells = sweep(&cfg, SweepParam::Temperature, &[1.0]);
    cfg.temperature = 1.0;
    assert_eq!(cells[0].outcome.as_ref().unwrap(), &run_experiment(&cfg).unwrap());
}

#[test]
fn invalid_cell_does_not_stop_the_sweep() {
    let mut cfg = small();
    cfg.repeats = 1;
    cfg.frameworks.truncate(2);
    let cells = sweep(&cfg, SweepParam::Lambda, &[0.2, 1.5, 0.4]);
    assert!(cells[0].outcome.is_ok());
    assert!(matches!(cells[1].outcome, Err(HarnessError::Config(_))));
    assert!(cells[2].outcome.is_ok());
    let text = hdus_harness::sweep::sweep_csv(&cfg.hash(), SweepParam::Lambda, &cells);
    let statuses: Vec<String> = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
        .records()
        .map(|r| r.unwrap()[6].to_string())
        .collect();
    assert_eq!(statuses.len(), 5);
    assert_eq!(statuses.iter().filter(|s| s.starts_with("error")).count(), 1);
}

#[test]
fn unwritable_destination_reports_path() {
    let report = run_experiment(&{
        let mut c = small();
        c.repeats = 1;
        c.frameworks.truncate(1);
        c
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("taken");
    std::fs::write(&blocker, "x").unwrap();
    match emit_metrics(&report, &blocker) {
        Err(HarnessError::Io { path, .. }) => assert_eq!(path, blocker),
        other => panic!("expected an I/O error, got {other:?}"),
    }
}
