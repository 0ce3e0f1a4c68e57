use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn potlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_potlab"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const QUIET: &str = r#"
[grid]
n = 32

[boundary]
kind = "affine"
slope = [1.0, -0.5]
offset = 0.2

[checks]
radius = 0.15
points = 5
"#;

#[test]
fn verify_trivial_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), QUIET);
    let out = dir.path().join("out");
    let res = potlab(&[
        "verify",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "3",
        "--jobs",
        "1",
    ]);
    assert_eq!(
        res.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&res.stdout)
    );
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("gradient_bounds"));
    let csv = fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert!(csv.starts_with("check,point_x,point_y,radius,lhs,rhs,ratio,flag\n"));
}

#[test]
fn infeasible_obstacle_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[grid]
n = 16

[obstacle]
preset = "affine"
slope = [0.0, 0.0]
offset = 1.0
"#,
    );
    let res = potlab(&[
        "solve",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("below the obstacle"));
}

#[test]
fn solve_writes_raster_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), QUIET);
    let res = potlab(&[
        "solve",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(0));
    assert!(dir.path().join("solution.txt").exists());
    let diag = fs::read_to_string(dir.path().join("diagnostics.txt")).unwrap();
    assert!(diag.contains("complementarity"));
}

#[test]
fn sweep_reports_each_cell() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{QUIET}\n[sweep]\nn = [16, 32]\n").replace(
        "[checks]\n",
        "[checks]\nlist = [\"comparison\", \"caccioppoli\"]\n",
    );
    let cfg = write_config(dir.path(), &body);
    let out = dir.path().join("sweep");
    let res = potlab(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(
        res.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    for cell in ["cell000", "cell001"] {
        assert!(out.join(cell).join("comparison.csv").exists());
        assert!(out.join(cell).join("caccioppoli.csv").exists());
    }
}

#[test]
fn potential_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{QUIET}\n[measure]\natoms = [[0.5, 0.5, 1.0]]\n");
    let cfg = write_config(dir.path(), &body);
    let res = potlab(&[
        "potential",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
        "--beta",
        "0.5",
        "--radius",
        "0.2",
        "--stride",
        "4",
    ]);
    assert_eq!(
        res.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("potential.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,y,value,truncation_flag"));
    assert!(lines.count() > 4);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(potlab(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(potlab(&["verify", "--bogus"]).status.code(), Some(2));
    assert_eq!(potlab(&["verify"]).status.code(), Some(2));
}

#[test]
fn missing_config_file_exits_with_one() {
    let res = potlab(&[
        "verify",
        "--config",
        "/nonexistent/exp.toml",
        "--out",
        "/tmp/x",
    ]);
    assert_eq!(res.status.code(), Some(1));
}
