use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use blb::formats::{parse_grid, read_table, RunManifest, SummaryFile, TrajectoryFile};
use serde_json::Value;

fn blb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blb"))
        .args(args)
        .env_remove("BLB_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = blb(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/logistic20.csv")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const MEAN_DATA: &str = "task=regression,features=normal,d=2,seed=4";

#[test]
fn adaptive_assess_writes_four_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    ok(&[
        "assess",
        "--synthetic",
        MEAN_DATA,
        "--n",
        "3000",
        "--estimator",
        "mean",
        "--adaptive",
        "--seed",
        "9",
        "--out",
        path(&out),
    ]);
    for name in [
        "summary.tsv",
        "trajectory.tsv",
        "manifest.json",
        "selection.json",
    ] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let summary = SummaryFile::from_table(&read_table(&out.join("summary.tsv")).unwrap()).unwrap();
    assert_eq!(summary.summary.dim(), 2);
    assert_eq!(summary.method, "blb-adaptive");
    let trajectory =
        TrajectoryFile::from_table(&read_table(&out.join("trajectory.tsv")).unwrap()).unwrap();
    assert_eq!(
        trajectory.trajectory.steps().last().unwrap().summary,
        summary.summary
    );

    let selection: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("selection.json")).unwrap())
            .unwrap();
    let s = selection["s"].as_u64().unwrap();
    assert!((4..=50).contains(&s), "{selection}");
    for sub in selection["subsamples"].as_array().unwrap() {
        assert!((21..=500).contains(&sub["r"].as_u64().unwrap()));
    }
}

#[test]
fn invalid_gamma_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = blb(&[
        "assess",
        "--synthetic",
        MEAN_DATA,
        "--n",
        "500",
        "--estimator",
        "mean",
        "--gamma",
        "1.1",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert!(
        err["error"]["message"].as_str().unwrap().contains("1.1"),
        "{err}"
    );
    assert!(!dir.path().join("summary.tsv").exists());
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(
        blb(&["assess", "--estimator", "mean"]).status.code(),
        Some(2)
    );
    assert_eq!(
        blb(&["assess", "--synthetic", MEAN_DATA, "--estimator", "median"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(blb(&["--help"]).status.code(), Some(0));
}

#[test]
fn adaptive_needs_blb() {
    let dir = tempfile::tempdir().unwrap();
    let out = blb(&[
        "assess",
        "--synthetic",
        MEAN_DATA,
        "--n",
        "500",
        "--estimator",
        "mean",
        "--method",
        "boot",
        "--adaptive",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, workers: &str| {
        let out = dir.path().join(name);
        ok(&[
            "assess",
            "--data",
            path(&fixture()),
            "--estimator",
            "logreg",
            "--ridge",
            "0.01",
            "--b",
            "12",
            "--s",
            "3",
            "--r",
            "20",
            "--seed",
            "11",
            "--workers",
            workers,
            "--out",
            path(&out),
        ]);
        std::fs::read(out.join("summary.tsv")).unwrap()
    };
    let first = run("a", "1");
    assert_eq!(first, run("b", "1"));
    assert_eq!(first, run("c", "4"));
}

#[test]
fn rerun_reproduces_summary() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    ok(&[
        "assess",
        "--synthetic",
        MEAN_DATA,
        "--n",
        "2000",
        "--estimator",
        "mean",
        "--method",
        "bofn",
        "--gamma",
        "0.6",
        "--seed",
        "5",
        "--out",
        path(&first),
    ]);
    ok(&[
        "rerun",
        path(&first.join("manifest.json")),
        "--out",
        path(&second),
    ]);
    assert_eq!(
        std::fs::read(first.join("summary.tsv")).unwrap(),
        std::fs::read(second.join("summary.tsv")).unwrap()
    );
    let manifest: RunManifest =
        serde_json::from_str(&std::fs::read_to_string(second.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest.seed, 5);
    assert_eq!(manifest.command, "assess");
}

#[test]
fn csv_fixture_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "assess",
        "--data",
        path(&fixture()),
        "--response",
        "y",
        "--estimator",
        "logreg",
        "--ridge",
        "0.01",
        "--method",
        "boot",
        "--r",
        "30",
        "--metric",
        "stderr",
        "--out",
        path(dir.path()),
    ]);
    let summary =
        SummaryFile::from_table(&read_table(&dir.path().join("summary.tsv")).unwrap()).unwrap();
    let values = summary.summary.values().unwrap();
    assert_eq!(values.len(), 3);
    assert!(values.iter().all(|v| v.is_finite() && *v > 0.0));

    let manifest: RunManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest.input_digest.len(), 64);
}

#[test]
fn low_fidelity_truth_warns_and_cache_hits() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &Path| -> Vec<String> {
        [
            "benchmark",
            "--synthetic",
            MEAN_DATA,
            "--estimator",
            "mean",
            "--n",
            "400",
            "--methods",
            "blb,boot",
            "--s",
            "2",
            "--r",
            "10",
            "--truth-realizations",
            "2",
            "--dataset-realizations",
            "2",
            "--cache-dir",
        ]
        .iter()
        .map(|s| s.to_string())
        .chain([
            path(&dir.path().join("cache")).to_string(),
            "--out".into(),
            path(out).to_string(),
        ])
        .collect()
    };
    let first = dir.path().join("first");
    let run = |out: &Path| {
        let a = args(out);
        ok(&a.iter().map(String::as_str).collect::<Vec<_>>())
    };
    let out = run(&first);
    assert!(String::from_utf8_lossy(&out.stderr).contains("low fidelity"));
    let cache_state = |dir: &Path| {
        let m: Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap())
                .unwrap();
        m["configuration"]["truth_cache"]
            .as_str()
            .unwrap()
            .to_string()
    };
    assert_eq!(cache_state(&first), "miss");

    let second = dir.path().join("second");
    run(&second);
    assert_eq!(cache_state(&second), "hit");
    let errors = |dir: &Path| {
        let t = read_table(&dir.join("final.tsv")).unwrap();
        let col = t.columns.iter().position(|c| c == "final_errors").unwrap();
        t.rows.iter().map(|r| r[col].clone()).collect::<Vec<_>>()
    };
    assert_eq!(errors(&first), errors(&second));
}

#[test]
fn fig3_preset_fills_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "benchmark",
        "--preset",
        "fig3-grid",
        "--n",
        "400",
        "--ridge",
        "0.01",
        "--truth-realizations",
        "10",
        "--dataset-realizations",
        "1",
        "--out",
        path(dir.path()),
    ]);
    let grid = parse_grid(&read_table(&dir.path().join("grid.tsv")).unwrap()).unwrap();
    assert_eq!(grid.len(), 36);
    assert!(grid
        .iter()
        .all(|c| c.relative_error.is_some_and(f64::is_finite)));
    let mut pairs: Vec<_> = grid.iter().map(|c| (c.r, c.s)).collect();
    pairs.dedup();
    assert_eq!(pairs.len(), 36);
}
