use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const SMALL: &str = "\
name = small
problem = ex51
mesh_cells = 64
max_level = 2
tau = 1e-6
modes = zero,accel
measure_bounds = true
";

fn sgwarm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgwarm")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn run_small(dir: &TempDir, extra: &[&str]) -> Output {
    let cfg = write(dir.path(), "small.cfg", SMALL);
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["run", "--config", &cfg, "--out", out];
    args.extend_from_slice(extra);
    sgwarm(&args)
}

#[test]
fn run_writes_report_and_tables() {
    let dir = TempDir::new().unwrap();
    let out = run_small(&dir, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["small_report.json", "small_table.csv", "small_timing.csv"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("small_report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["reports"].as_array().unwrap().len(), 2);
    let table = fs::read_to_string(dir.path().join("small_table.csv")).unwrap();
    let header = table.lines().next().unwrap();
    assert_eq!(
        header,
        "level,points,new_points,error,K_zero,K_accelerated,mean_zero,mean_accelerated,\
         iter_savings_pct_accelerated,cost_savings_pct_accelerated"
    );
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn csv_output_is_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert_eq!(run_small(&a, &["--workers", "1", "--seed", "3"]).status.code(), Some(0));
    assert_eq!(run_small(&b, &["--workers", "4", "--seed", "3"]).status.code(), Some(0));
    let read = |d: &TempDir| fs::read(d.path().join("small_table.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn json_only_and_mode_override() {
    let dir = TempDir::new().unwrap();
    let out = run_small(&dir, &["--format", "json", "--modes", "nearest_neighbor"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(!dir.path().join("small_table.csv").exists());
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("small_report.json")).unwrap()).unwrap();
    assert_eq!(report["reports"][0]["mode"], "nearest_neighbor");
}

#[test]
fn config_errors_exit_one() {
    assert_eq!(sgwarm(&["run"]).status.code(), Some(1));
    assert_eq!(sgwarm(&["run", "--config", "/nonexistent/file.cfg"]).status.code(), Some(1));
    let dir = TempDir::new().unwrap();
    let bad = write(dir.path(), "bad.cfg", "problem = ex51\nmax_level = 1\ncolour = red\n");
    assert_eq!(sgwarm(&["run", "--config", &bad]).status.code(), Some(1));
    let bad = write(dir.path(), "bad2.cfg", "problem = ex51\nmax_level = 1\ntau = 0\n");
    assert_eq!(sgwarm(&["run", "--config", &bad]).status.code(), Some(1));
    assert_eq!(sgwarm(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn nonconvergence_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "stuck.cfg", "problem = ex51\nmesh_cells = 64\nmax_level = 1\ntau = 1e-12\nmax_iter = 3\n");
    let out = sgwarm(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(dir.path().join("stuck_report.json").exists());
}

#[test]
fn bound_checks_pass_and_catch_tampering() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run_small(&dir, &[]).status.code(), Some(0));
    let path = dir.path().join("small_report.json");
    let p = path.to_str().unwrap();
    let out = sgwarm(&["check-bounds", "--report", p]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(dir.path().join("small_bounds.csv")).unwrap();
    assert!(table.lines().skip(1).all(|l| l.ends_with(",true")));

    let mut report: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    for s in report["reports"][0]["solves"].as_array_mut().unwrap() {
        let k = s["iterations"].as_u64().unwrap();
        s["iterations"] = Value::from(100 * k);
    }
    let tampered = write(dir.path(), "tampered.json", &report.to_string());
    assert_eq!(sgwarm(&["check-bounds", "--report", &tampered]).status.code(), Some(3));
}

#[test]
fn missing_measurements_exit_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "plain.cfg", &SMALL.replace("measure_bounds = true", "measure_bounds = false"));
    let out_dir = dir.path().to_str().unwrap();
    assert_eq!(sgwarm(&["run", "--config", &cfg, "--out", out_dir]).status.code(), Some(0));
    let report = dir.path().join("small_report.json");
    assert_eq!(sgwarm(&["check-bounds", "--report", report.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn lebesgue_checks_hold() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run_small(&dir, &[]).status.code(), Some(0));
    let params = write(dir.path(), "l.params", "lebesgue_max_dim = 3\nlebesgue_max_level = 4\nlebesgue_samples = 500\n");
    let report = dir.path().join("small_report.json");
    let out = sgwarm(&["check-bounds", "--report", report.to_str().unwrap(), "--params", &params]);
    assert_eq!(out.status.code(), Some(0));
    let table = fs::read_to_string(dir.path().join("small_bounds.csv")).unwrap();
    assert_eq!(table.lines().filter(|l| l.starts_with("lebesgue,")).count(), 15);
}

#[test]
fn compare_identical_reports_has_zero_savings() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run_small(&dir, &["--modes", "zero"]).status.code(), Some(0));
    let report = dir.path().join("small_report.json");
    let r = report.to_str().unwrap();
    let out = sgwarm(&["compare", r, r]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let cols: Vec<usize> = (0..header.len()).filter(|&i| header[i].contains("savings")).collect();
    assert_eq!(cols.len(), 4);
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert!(cols.iter().all(|&c| fields[c] == "0"), "{line}");
    }
}

#[test]
fn compare_rejects_grid_mismatch() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run_small(&dir, &["--modes", "zero"]).status.code(), Some(0));
    let other_dir = TempDir::new().unwrap();
    let cfg = write(other_dir.path(), "small.cfg", &SMALL.replace("max_level = 2", "max_level = 1"));
    let out = other_dir.path().to_str().unwrap();
    assert_eq!(sgwarm(&["run", "--config", &cfg, "--out", out, "--modes", "zero"]).status.code(), Some(0));
    let a = dir.path().join("small_report.json");
    let b = other_dir.path().join("small_report.json");
    assert_eq!(sgwarm(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(sgwarm(&["compare", a.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn dump_grid_counts() {
    let out = sgwarm(&["dump-grid", "--dim", "4", "--level", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 137);
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "small.cfg", SMALL);
    let out = sgwarm(&["dump-grid", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("small_grid.txt")).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 41);
    assert_eq!(sgwarm(&["dump-grid", "--level", "2"]).status.code(), Some(1));
}
