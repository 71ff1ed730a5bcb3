use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SOLVE: &str = "[run]\nmode = solve\n[model]\np = 3\nlambda = 0.5\nq = 4.5\n";

fn sbi(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let path = dir.join("run.cfg");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_sbi"))
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap()
}

fn path<'a>(v: &'a Value, key: &str) -> &'a Value {
    key.split('.').fold(v, |v, k| &v[k])
}

#[test]
fn solve_writes_report_and_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sbi(tmp.path(), SOLVE, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(tmp.path());
    assert_eq!(r["schema"], "sbi-report/1");
    assert_eq!(r["status"], "ok");
    for key in ["energy.total", "residual.pohozaev", "residual.grad", "level.c_lambda"] {
        assert!(path(&r, key).as_f64().unwrap().is_finite(), "{key}");
    }
    let e = path(&r, "energy.total").as_f64().unwrap();
    assert!((e - 8.86342054).abs() < 1e-7, "{e}");
    let profile = fs::read_to_string(tmp.path().join("out/profile.csv")).unwrap();
    assert_eq!(profile.lines().next(), Some("r,u,phi,dphi,Q"));
    assert_eq!(profile.lines().count(), 2002);
    let trace = fs::read_to_string(tmp.path().join("out/trace.csv")).unwrap();
    assert!(trace.lines().count() > 2);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(sbi(tmp.path(), SOLVE, &[]).status.code(), Some(0));
    let first: Vec<Vec<u8>> = ["report.json", "profile.csv", "trace.csv"]
        .iter()
        .map(|f| fs::read(tmp.path().join("out").join(f)).unwrap())
        .collect();
    assert_eq!(sbi(tmp.path(), SOLVE, &["--threads", "2"]).status.code(), Some(0));
    for (f, bytes) in ["report.json", "profile.csv", "trace.csv"].iter().zip(&first) {
        assert_eq!(&fs::read(tmp.path().join("out").join(f)).unwrap(), bytes, "{f}");
    }
}

#[test]
fn range_violations_exit_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    for (doc, needle) in [
        (SOLVE.replace("lambda = 0.5", "lambda = 1.5"), "λ ∈ (0,1]"),
        (SOLVE.replace("lambda = 0.5", "lambda = 0"), "λ ∈ (0,1]"),
        (SOLVE.replace("q = 4.5", "q = 3.5"), "q must exceed max{p,4}"),
        (SOLVE.replace("q = 4.5", "q = 5"), "q must exceed max{p,4}"),
    ] {
        let out = sbi(tmp.path(), &doc, &["--strict"]);
        assert_eq!(out.status.code(), Some(2));
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(needle), "{err}");
        assert!(!tmp.path().join("out/report.json").exists());
    }
}

#[test]
fn unknown_keys_rejected_only_in_strict_mode() {
    let tmp = tempfile::tempdir().unwrap();
    let doc = format!("{SOLVE}colour = blue\n");
    let out = sbi(tmp.path(), &doc, &["--strict"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 7"));
    let out = sbi(tmp.path(), &doc, &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn validate_mode_passes_for_cubic() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sbi(tmp.path(), "[run]\nmode = validate\n[model]\np = 3\n", &[]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(tmp.path())["all_pass"], true);
}

#[test]
fn failed_certificate_exits_with_four() {
    let tmp = tempfile::tempdir().unwrap();
    // (f3) needs ϱ ≤ p + 1 for a pure power.
    let out = sbi(tmp.path(), "[run]\nmode = validate\n[model]\np = 2.25\nvarrho = 3.5\n", &[]);
    assert_eq!(out.status.code(), Some(4));
    let r = report(tmp.path());
    assert_eq!(r["status"], "certification_failed");
    assert_eq!(r["all_pass"], false);
}

#[test]
fn missing_config_and_unwritable_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sbi"))
        .arg("--config")
        .arg(tmp.path().join("absent.cfg"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "").unwrap();
    fs::write(tmp.path().join("run.cfg"), SOLVE).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sbi"))
        .arg("--config")
        .arg(tmp.path().join("run.cfg"))
        .arg("--out")
        .arg(blocker.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
