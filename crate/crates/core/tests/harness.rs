use std::path::{Path, PathBuf};

use absence::harness::*;
use absence::policy::Decision;
use absence::Error;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn quick() -> ExperimentConfig {
    ExperimentConfig::load(&repo().join("configs/quick.json")).unwrap()
}

#[test]
fn batch_accounts_for_every_trial() {
    let cfg = quick();
    let out = run_batch(&cfg).unwrap();
    assert_eq!(out.trials.len(), 2 * 2 * cfg.trials_per_condition);
    for c in &out.summary.conditions {
        assert_eq!(c.decisions.absence_confirmed + c.decisions.anomaly_detected, c.trials);
        assert_eq!(c.fpr.is_some(), c.source_strength.is_none());
        assert_eq!(c.fnr.is_some(), c.source_strength.is_some());
    }
    // seeds follow seed_base + k in (map, condition, trial) order
    let seeds: Vec<u64> = out.trials.iter().map(|t| t.seed).collect();
    assert_eq!(seeds, (7..7 + 40).collect::<Vec<_>>());
    for row in &out.trials {
        assert_eq!(row.detect_steps.is_some(), row.decision == Decision::AnomalyDetected);
    }
    assert!(out.summary.totals.fnr == Some(0.0));
}

#[test]
fn batch_is_identical_across_worker_counts() {
    let mut cfg = quick();
    cfg.workers = 1;
    let a = run_batch(&cfg).unwrap();
    cfg.workers = 4;
    let b = run_batch(&cfg).unwrap();
    assert_eq!(
        serde_json::to_string(&a.summary).unwrap(),
        serde_json::to_string(&b.summary).unwrap()
    );
    assert_eq!(a.trials, b.trials);
    assert_eq!(a.pvalues, b.pvalues);
}

#[test]
fn zero_trials_give_empty_summary() {
    let mut cfg = quick();
    cfg.trials_per_condition = 0;
    let out = run_batch(&cfg).unwrap();
    assert!(out.trials.is_empty());
    assert_eq!(out.summary.totals.fpr, None);
    assert!(out.summary.conditions.iter().all(|c| c.trials == 0));
}

#[test]
fn map_without_free_space_is_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let blocked = r#"{"name": "blocked", "l_x": 10.0, "l_y": 10.0, "background": 60.0,
        "obstacles": [{"kind": "rect", "min": {"x": 0.0, "y": 0.0}, "max": {"x": 10.0, "y": 10.0}}]}"#;
    std::fs::write(dir.path().join("blocked.json"), blocked).unwrap();
    let mut cfg = quick();
    cfg.maps = vec![dir.path().join("blocked.json"), repo().join("maps/empty.json")];
    cfg.trials_per_condition = 2;
    let out = run_batch(&cfg).unwrap();
    assert_eq!(out.summary.skipped.len(), 2);
    assert_eq!(out.trials.len(), 4);
    // the skipped map still consumes its seeds
    assert_eq!(out.trials[0].seed, 7 + 4);
}

#[test]
fn outputs_round_trip_through_plot_data() {
    let cfg = quick();
    let dir = tempfile::tempdir().unwrap();
    run_batch(&cfg).unwrap().write(dir.path()).unwrap();
    for f in ["summary.json", "trials.csv", "pvalues.csv", "steps.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);

    let pv = emit_plot_data(dir.path(), PlotKind::PvalueEvolution).unwrap();
    let floor = (0.005f64 / 10.0).log10();
    let mut detected_rows = 0;
    for line in pv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let log: f64 = cols[4].parse().unwrap();
        assert!(log >= floor - 1e-12);
        if cols[0].ends_with("/s1000") && (log - floor).abs() < 1e-12 {
            detected_rows += 1;
        }
    }
    assert!(detected_rows > 0);

    let cdf = emit_plot_data(dir.path(), PlotKind::StepCdf).unwrap();
    assert!(cdf.starts_with("condition,s_normalized,empirical,reference,dkw_lower,dkw_upper,within_band"));
    assert!(matches!(emit_plot_data(dir.path(), PlotKind::CoverageCurve), Err(Error::Config(_))));
}

#[test]
fn coverage_study_writes_table_and_curves() {
    let cfg = quick();
    let out = run_coverage(&cfg).unwrap();
    assert_eq!(out.summary.cells.len(), 2 * 2);
    assert_eq!(out.rows.len(), 4 * 10);
    for cell in &out.summary.cells {
        assert_eq!(cell.covered, cell.trials);
    }
    let dir = tempfile::tempdir().unwrap();
    out.write(dir.path()).unwrap();
    let header = std::fs::read_to_string(dir.path().join("cover_times.csv")).unwrap();
    assert!(header.starts_with("env_id,c_U,bins,trial,cover_steps,cover_seconds"));
    let curve = emit_plot_data(dir.path(), PlotKind::CoverageCurve).unwrap();
    let mut last: Option<(String, f64)> = None;
    for line in curve.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let t: usize = cols[3].parse().unwrap();
        assert!(t >= 10);
        let key = format!("{}{}{}", cols[0], cols[1], cols[2]);
        let frac: f64 = cols[5].parse().unwrap();
        if let Some((k, prev)) = &last {
            if *k == key {
                assert!(frac >= *prev);
            }
        }
        last = Some((key, frac));
    }
}

#[test]
fn audit_separates_leaky_record_only() {
    let cfg = quick();
    let report = privacy_audit(&cfg).unwrap();
    assert_eq!(report.pairs.len(), 1);
    assert_eq!(report.self_checks.len(), 2);
    assert_eq!(report.rows.len(), 3 * 5);
    let pair = &report.pairs[0];
    assert!(pair.leaky_reject_rate >= 0.8, "{pair:?}");
    assert!(pair.steps_reject_rate <= 0.4, "{pair:?}");
}

#[test]
fn audit_needs_two_source_free_maps() {
    let mut cfg = quick();
    cfg.maps.truncate(1);
    assert!(matches!(privacy_audit(&cfg), Err(Error::Config(_))));
    let mut cfg = quick();
    cfg.audit.as_mut().unwrap().steps = 500;
    assert!(matches!(privacy_audit(&cfg), Err(Error::Config(_))));
}
