use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn plab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plab"))
        .args(args)
        .current_dir(fixtures())
        .output()
        .expect("spawn plab")
}

fn report(args: &[&str]) -> Value {
    let out = plab(args);
    assert!(
        out.status.success(),
        "plab {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut v: Value = serde_json::from_slice(&out.stdout).expect("report is JSON");
    v.as_object_mut().unwrap().remove("wall_clock_seconds").expect("wall clock field");
    v
}

/// Compares with `tests/golden/<name>.json`; `UPDATE_GOLDEN=1` rewrites it.
fn golden(name: &str, args: &[&str]) {
    let got = report(args);
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("tests/golden/{name}.json"));
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, serde_json::to_string_pretty(&got).unwrap() + "\n").unwrap();
        return;
    }
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let want: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(got, want, "{name} differs from golden");
}

#[test]
fn golden_emx() {
    golden(
        "emx",
        &["emx", "--epsilon", "0.1", "--delta", "0.1", "--dist", "dist.json", "--trials", "2000", "--sweep-d", "1,5,22"],
    );
}

#[test]
fn golden_coarse_random_atoms() {
    golden(
        "coarse",
        &["coarse", "--bits", "3", "--epsilon", "0.2", "--delta", "0.1", "--trials", "500", "--atoms", "50"],
    );
}

#[test]
fn golden_coarse_points() {
    golden(
        "coarse_points",
        &["coarse", "--bits", "2", "--epsilon", "0.2", "--delta", "0.1", "--dist", "points.json", "--trials", "500"],
    );
}

#[test]
fn golden_compress() {
    golden("compress_demo", &["compress", "--mode", "demo"]);
    golden("compress_lemma1", &["compress", "--mode", "lemma1", "--sweep-m", "1,2,3"]);
}

#[test]
fn golden_quantum() {
    golden(
        "quantum",
        &["quantum", "discriminate", "--gamma", "0.9", "--copies", "3", "--delta", "0.05", "--sweep-gamma", "0.3,0.5,0.9"],
    );
}

#[test]
fn golden_feasible_lp() {
    golden(
        "feasible_lp",
        &["feasible", "lp", "--task", "task_identity.json", "--epsilon", "0", "--delta", "1/3"],
    );
    golden(
        "feasible_lp_constant",
        &[
            "feasible", "lp", "--task", "task_identity.json", "--polytope", "polytope_constant.json", "--epsilon", "0",
            "--delta", "1/3",
        ],
    );
}

#[test]
fn golden_feasible_sdp() {
    golden(
        "feasible_sdp",
        &[
            "feasible", "sdp", "--states", "states", "--task", "task_identity.json", "--copies", "2", "--epsilon", "0",
            "--delta", "0.2",
        ],
    );
}

#[test]
fn constant_kernel_cannot_separate_states() {
    let v = report(&[
        "feasible", "lp", "--task", "task_identity.json", "--polytope", "polytope_constant.json", "--epsilon", "0",
        "--delta", "1/3",
    ]);
    assert_eq!(v["metrics"]["verdict"], "infeasible");
    let v = report(&[
        "feasible", "lp", "--task", "task_identity.json", "--polytope", "polytope_constant.json", "--epsilon", "0",
        "--delta", "1/2",
    ]);
    assert_eq!(v["metrics"]["verdict"], "feasible");
}

#[test]
fn sdp_below_helstrom_error_is_infeasible() {
    // |0> and |+> with two copies: the optimal error is about 0.067
    let v = report(&[
        "feasible", "sdp", "--states", "states", "--task", "task_identity.json", "--copies", "2", "--epsilon", "0",
        "--delta", "0.05",
    ]);
    assert_eq!(v["metrics"]["verdict"], "infeasible");
}

#[test]
fn runs_are_deterministic() {
    let args = ["emx", "--epsilon", "0.2", "--delta", "0.2", "--dist", "dist.json", "--trials", "3000"];
    assert_eq!(report(&args), report(&args));
    let a = report(&["emx", "--epsilon", "0.2", "--delta", "0.2", "--dist", "dist.json", "--seed", "1"]);
    let b = report(&["emx", "--epsilon", "0.2", "--delta", "0.2", "--dist", "dist.json", "--seed", "2"]);
    assert_ne!(a["metrics"]["rate"], b["metrics"]["rate"]);
}

#[test]
fn unknown_kind_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"kind": "foo", "parameters": {}}"#).unwrap();
    let out = plab(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema error"));
}

#[test]
fn bad_parameters_fail() {
    let out = plab(&["emx", "--epsilon", "1.5", "--delta", "0.1", "--dist", "dist.json"]);
    assert!(!out.status.success());
    let out = plab(&["emx", "--epsilon", "0.1", "--delta", "0.1", "--dist", "missing.json"]);
    assert!(!out.status.success());
}

#[test]
fn config_run_writes_report_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let report_path = dir.path().join("q.json");
    let csv_path = dir.path().join("q.csv");
    let out = plab(&["run", "--config", "quantum_sweep.json", "--out", report_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(saved["config"]["seed"], 7);
    assert_eq!(saved["metrics"]["d_min"], 8);

    let out = plab(&["table", "--report", report_path.to_str().unwrap(), "--out", csv_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "copies,delta_min,helstrom_error");
    assert_eq!(lines.len(), 5);
    assert!(lines[4].starts_with("8,0.0486968920"));
}

#[test]
fn table_without_sweep_fails() {
    let dir = tempfile::tempdir().unwrap();
    let report_path = dir.path().join("r.json");
    let out = plab(&["compress", "--mode", "demo", "--out", report_path.to_str().unwrap()]);
    assert!(out.status.success());
    let out = plab(&["table", "--report", report_path.to_str().unwrap(), "--out", dir.path().join("t.csv").to_str().unwrap()]);
    assert!(!out.status.success());
}
