//! End-to-end checks of the binary: exit codes, artifact layout, and
//! byte-identical reproduction of outputs from a config sidecar.

use std::path::Path;
use std::process::{Command, Output};

fn scalc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scalc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|_| panic!("missing {name}"))
}

#[test]
fn verify_smoothing_passes_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = scalc(&[
        "verify-smoothing",
        "--bandwidth",
        "32",
        "--t-count",
        "16",
        "--trials",
        "8",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read(dir.path(), "smoothing_report.json");
    let text = String::from_utf8(report).unwrap();
    assert!(text.contains("\"pass\": true"));
    let meta = String::from_utf8(read(dir.path(), "verify_smoothing_meta.json")).unwrap();
    assert!(meta.contains("config_hash"));
}

#[test]
fn usage_and_validation_errors_exit_2() {
    // unknown flag: clap usage error
    let out = scalc(&["verify-smoothing", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    // levels beyond max_level
    let dir = tempfile::tempdir().unwrap();
    let out = scalc(&[
        "verify-smoothing",
        "--levels",
        "9",
        "--max-level",
        "6",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    // zero trials
    let out = scalc(&[
        "verify-smoothing",
        "--trials",
        "0",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_converges_and_is_reproducible_from_its_sidecar() {
    let dir1 = tempfile::tempdir().unwrap();
    let args = [
        "solve",
        "--bandwidth",
        "32",
        "--levels",
        "3",
        "--seed",
        "11",
        "--out-dir",
        dir1.path().to_str().unwrap(),
    ];
    let out = scalc(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let trace1 = read(dir1.path(), "solve_trace.csv");
    let meta1 = read(dir1.path(), "solve_meta.json");

    // rerun with identical flags: byte-identical outputs
    let dir2 = tempfile::tempdir().unwrap();
    let out = scalc(&[
        "solve",
        "--bandwidth",
        "32",
        "--levels",
        "3",
        "--seed",
        "11",
        "--out-dir",
        dir2.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(trace1, read(dir2.path(), "solve_trace.csv"));
    assert_eq!(meta1, read(dir2.path(), "solve_meta.json"));

    // rerun purely from the recorded config sidecar
    let dir3 = tempfile::tempdir().unwrap();
    let sidecar = dir1.path().join("solve_config.json");
    let out = scalc(&[
        "solve",
        "--config",
        sidecar.to_str().unwrap(),
        "--out-dir",
        dir3.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(trace1, read(dir3.path(), "solve_trace.csv"));
}

#[test]
fn zero_target_solve_is_a_one_row_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = scalc(&[
        "solve",
        "--bandwidth",
        "16",
        "--target-norm0",
        "0",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let trace = String::from_utf8(read(dir.path(), "solve_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 2, "header plus a single row");
}

#[test]
fn degenerate_guard_reports_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let out = scalc(&[
        "solve",
        "--bandwidth",
        "16",
        "--guard",
        "0",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let meta = String::from_utf8(read(dir.path(), "solve_meta.json")).unwrap();
    assert!(meta.contains("\"status\": \"diverged\""));
}

#[test]
fn report_needs_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = scalc(&["report", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_collects_sections_and_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(
        scalc(&["solve", "--bandwidth", "16", "--levels", "2", "--out-dir", d])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        scalc(&[
            "verify-smoothing",
            "--bandwidth",
            "16",
            "--t-count",
            "8",
            "--trials",
            "4",
            "--out-dir",
            d,
        ])
        .status
        .code(),
        Some(0)
    );
    let out = scalc(&["report", "--out-dir", d]);
    assert_eq!(out.status.code(), Some(0));
    let summary = String::from_utf8(read(dir.path(), "summary.json")).unwrap();
    assert!(summary.contains("solve_trace.csv"));
    assert!(summary.contains("smoothing_report.json"));
    assert!(summary.contains("sha256"));
    assert!(summary.contains("slope"));
    let text = String::from_utf8(read(dir.path(), "summary.txt")).unwrap();
    assert!(text.contains("[smoothing]"));
    assert!(text.contains("[solve]"));

    // the report itself is reproducible
    let out = scalc(&["report", "--out-dir", d]);
    assert_eq!(out.status.code(), Some(0));
    let again = String::from_utf8(read(dir.path(), "summary.json")).unwrap();
    assert_eq!(summary, again);
}
