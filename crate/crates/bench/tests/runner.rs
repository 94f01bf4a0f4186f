use std::fs;
use std::path::Path;
use std::process::Command;

use ood_bench::config::ExperimentConfig;
use ood_bench::emit::{emit_report, parse_report, ReportFormat};
use ood_bench::runner::{compare_shared_vs_separate, expand_jobs, recompute_report, run_experiment, FailureManifest, MANIFEST_NAME};
use ood_bench::BenchError;
use ood_core::metrics::ReportMetric;
use serde_json::json;

fn config(v: serde_json::Value) -> ExperimentConfig {
    let c: ExperimentConfig = serde_json::from_value(v).unwrap();
    c.validate().unwrap();
    c
}

fn coin_oracle(training_flag: bool) -> ExperimentConfig {
    config(json!({
        "schema_version": 1,
        "scenario": {"name": "coin", "classes": 2},
        "methods": [
            {"name": "OE", "loss": {"kind": "confidence_oe"}, "trainer": "oracle"},
            {"name": "Shared", "loss": {"kind": "shared_combo"}, "trainer": "oracle"}
        ],
        "scores": ["s1", "s2", "s3", "msp"],
        "test_out": [
            {"name": "chips", "out": {"kind": "training"}, "training": training_flag},
            {"name": "uniform", "out": {"kind": "uniform"}}
        ],
        "eval_in_prefix": "common"
    }))
}

#[test]
fn golden_coin_oracle_report() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&coin_oracle(true), dir.path(), 1).unwrap();
    let csv = fs::read_to_string(dir.path().join("report_auc.csv")).unwrap();
    let golden = include_str!("golden/coin_oracle_auc.csv");
    assert_eq!(csv, golden);
    assert!(csv.starts_with("model,acc,mean_auc,chips,uniform\n"));
}

#[test]
fn coin_oracle_cells_are_exact() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_experiment(&coin_oracle(true), dir.path(), 1).unwrap();
    let rep = &r.reports[0];
    assert_eq!(rep.cell("OE", "msp", "chips").unwrap().auc, 0.5);
    assert_eq!(rep.cell("Shared", "s3", "chips").unwrap().auc, 0.5);
    assert_eq!(rep.cell("Shared", "s1", "chips").unwrap().auc, 1.0);
    assert_eq!(rep.cell("Shared", "s2", "chips").unwrap().auc, 1.0);
    assert_eq!(rep.cell("Shared", "s1", "chips").unwrap().fpr_at_tpr, 0.0);
    assert_eq!(rep.cell("OE", "msp", "chips").unwrap().fpr_at_tpr, 1.0);
}

#[test]
fn mean_column_only_with_training_flag() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_experiment(&coin_oracle(false), dir.path(), 1).unwrap();
    assert!(!r.reports[0].has_mean());
    let csv = fs::read_to_string(dir.path().join("report_fpr.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "model,acc,chips,uniform");

    let r = run_experiment(&coin_oracle(true), dir.path(), 1).unwrap();
    let row = r.reports[0].row("Shared", "s1").unwrap();
    // mean over the unflagged column only
    assert_eq!(row.mean_fpr, Some(row.cells[1].fpr_at_tpr));
}

#[test]
fn json_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_experiment(&coin_oracle(true), dir.path(), 1).unwrap();
    let path = dir.path().join("one.json");
    emit_report(&r.reports[0], ReportFormat::Json, &path).unwrap();
    let back = parse_report(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back, r.reports[0]);
}

#[test]
fn csv_uses_six_decimals() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_experiment(&coin_oracle(true), dir.path(), 1).unwrap();
    for line in r.reports[0].to_csv(ReportMetric::Auc).lines().skip(1) {
        for cell in line.split(',').skip(1) {
            let (_, frac) = cell.split_once('.').unwrap();
            assert_eq!(frac.len(), 6, "{cell}");
        }
    }
}

fn blob_tabular() -> ExperimentConfig {
    config(json!({
        "schema_version": 1,
        "scenario": {"name": "gaussian_grid_2d", "grid": 10},
        "methods": [
            {"name": "OE", "loss": {"kind": "confidence_oe"}, "trainer": "tabular"},
            {"name": "plain", "loss": {"kind": "classifier_ce"}, "trainer": "tabular"}
        ],
        "scores": ["msp"],
        "test_out": [
            {"name": "train", "out": {"kind": "training"}, "training": true},
            {"name": "far", "out": {"kind": "gaussian", "center": [0.8, -0.8], "sigma": 0.2}}
        ],
        "run": {"seeds": [3], "steps": 300, "learning_rate": 0.5, "lambdas": [0.1, 1, 2]}
    }))
}

#[test]
fn lambda_sweep_gives_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_experiment(&blob_tabular(), dir.path(), 2).unwrap();
    let methods: Vec<_> = r.reports[0].rows.iter().map(|r| r.method.as_str()).collect();
    // the plain classifier has no out term, so it is not swept
    assert_eq!(methods, ["OE lambda=0.1", "OE lambda=1", "OE lambda=2", "plain"]);
}

#[test]
fn cells_recompute_from_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let c = blob_tabular();
    let r = run_experiment(&c, dir.path(), 1).unwrap();
    let ids: Vec<_> = expand_jobs(&c).into_iter().map(|j| (j.label, j.run_id)).collect();
    let again = recompute_report(dir.path(), &r.reports[0], &ids).unwrap();
    assert_eq!(again, r.reports[0]);
}

#[test]
fn identical_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&blob_tabular(), a.path(), 1).unwrap();
    run_experiment(&blob_tabular(), b.path(), 3).unwrap();
    for f in ["report.json", "report_auc.csv", "report_fpr.csv", "runs/OE__lambda1__seed3/loss.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

fn failing() -> ExperimentConfig {
    // the coin scenario has no coordinates, so the MLP job fails
    config(json!({
        "schema_version": 1,
        "scenario": {"name": "coin", "classes": 2},
        "methods": [
            {"name": "OE", "loss": {"kind": "confidence_oe"}, "trainer": "oracle"},
            {"name": "net", "loss": {"kind": "confidence_oe"}, "trainer": "mlp"}
        ],
        "scores": ["msp"],
        "test_out": [{"name": "chips", "out": {"kind": "training"}}]
    }))
}

#[test]
fn failure_flushes_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_experiment(&failing(), dir.path(), 1).unwrap_err();
    let BenchError::RunFailed { manifest, .. } = err else { panic!("{err}") };
    assert_eq!(manifest, dir.path().join(MANIFEST_NAME));
    let m: FailureManifest = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m.failed_jobs.len(), 1);
    assert_eq!(m.failed_jobs[0].run_id, "net__seed0");
    assert_eq!(m.completed_jobs, ["OE__seed0"]);
    assert!(dir.path().join("runs/OE__seed0/scores_msp.csv").exists());
    assert!(dir.path().join("report_fpr.csv").exists());
}

fn cli(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ood-bench"))
        .args(args)
        .current_dir(cwd)
        .env_remove("OOD_BENCH_OUT")
        .output()
        .unwrap()
}

#[test]
fn cli_reports_manifest_on_failure() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), failing().to_json()).unwrap();
    let o = cli(&["train", "--config", "bad.json", "--out", "res"], dir.path());
    assert!(!o.status.success());
    let stderr = String::from_utf8(o.stderr).unwrap();
    assert!(stderr.contains(&format!("failure manifest: res/{MANIFEST_NAME}")), "{stderr}");
    assert!(dir.path().join("res").join(MANIFEST_NAME).exists());
}

#[test]
fn cli_runs_and_reemits() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("coin.json"), coin_oracle(true).to_json()).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ood-bench"))
        .args(["oracle", "eval", "--config", "coin.json", "--format", "json"])
        .env("OOD_BENCH_OUT", "from_env")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let printed = parse_report(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert!(dir.path().join("from_env/runs/OE__seed0/oracle_table.csv").exists());

    let o = cli(&["report", "--input", "from_env/report.json", "--metric", "auc"], dir.path());
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), printed.to_csv(ReportMetric::Auc));

    let o = cli(&["scenario", "gen", "--name", "coin", "--params", "{\"classes\": 3}", "--out", "s"], dir.path());
    assert!(o.status.success());
    assert!(dir.path().join("s/scenario.json").exists());

    let o = cli(&["scenario", "gen", "--name", "spiral", "--out", "s2"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8(o.stderr).unwrap().contains("spiral"));

    let o = cli(&["sweep", "--config", "coin.json", "--out", "s3"], dir.path());
    assert!(!o.status.success());
}

#[test]
fn tabular_comparison_has_zero_deltas() {
    let c = config(json!({
        "schema_version": 1,
        "scenario": {"name": "gaussian_grid_2d", "grid": 8, "sigma": 0.3},
        "methods": [{"name": "unused", "loss": {"kind": "classifier_ce"}, "trainer": "oracle"}],
        "scores": ["s1", "s2", "s3"],
        "test_out": [{"name": "train", "out": {"kind": "training"}}],
        "run": {"seeds": [0], "steps": 20000, "learning_rate": 0.5},
        "compare": {"trainer": "tabular"}
    }));
    let dir = tempfile::tempdir().unwrap();
    let p = compare_shared_vs_separate(&c, dir.path(), 3).unwrap();
    assert_eq!(p.delta.rows.len(), 3);
    for row in &p.delta.rows {
        for cell in &row.cells {
            assert!(cell.auc.abs() < 1e-6 && cell.fpr_at_tpr.abs() < 1e-6, "{row:?}");
        }
    }
    let methods: Vec<_> = p.shared.rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(methods, ["shared", "shared", "shared", "plain x shared disc", "plain x shared disc", "plain x shared disc"]);
    assert!(dir.path().join("compare_delta_auc.csv").exists());
}
