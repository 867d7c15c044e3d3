use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_soliton-lab"))
}

fn flat_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/flat.json")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn bad_resolution_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"model": {"kind": "cigar"}, "resolution": {"K": 1}}"#).unwrap();
    let out = bin().arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("resolution.K"), "{}", stderr(&out));
}

#[test]
fn unknown_experiment_exits_with_config_error() {
    let out = bin().arg("--config").arg(flat_config()).args(["--only", "bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bogus"), "{}", stderr(&out));
}

#[test]
fn missing_config_file_exits_with_error() {
    let out = bin().args(["--config", "/nonexistent/run.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flat_run_passes_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("--config")
        .arg(flat_config())
        .arg("--out")
        .arg(dir.path())
        .args(["--seed", "3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("geodesic") && stdout.contains("non-smooth fraction"), "{stdout}");
    for f in ["report.json", "geodesic.csv", "rho.csv", "rho_hj.csv", "hj_convergence.dat"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let report: String = fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert!(report.contains("\"seed\": 3"), "{report}");
}

#[test]
fn only_flag_restricts_experiments() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("--config")
        .arg(flat_config())
        .arg("--out")
        .arg(dir.path())
        .args(["--only", "geodesic"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(dir.path().join("geodesic.csv").exists());
    assert!(!dir.path().join("rho.csv").exists());
}
