use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use catenary_core::scenario::{read_log, HEADER};

fn catenary(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_catenary")).args(args).output().expect("binary runs")
}

fn simulate_to(path: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["simulate", "--out", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    catenary(&args)
}

#[test]
fn zero_duration_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    let out = simulate_to(&path, &["--scenario", "rolling_line", "--duration", "0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&path).unwrap();
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body, vec![HEADER]);
    assert!(text.lines().next().unwrap().starts_with("# {"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let out = simulate_to(p, &["--scenario", "dragging_semicircle", "--duration", "1.5"]);
        assert!(out.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn analyze_round_trips_a_simulated_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("drag.csv");
    let metrics = dir.path().join("metrics.txt");
    assert!(simulate_to(&log, &["--scenario", "dragging_semicircle"]).status.success());
    let records = read_log(std::io::BufReader::new(fs::File::open(&log).unwrap())).unwrap();
    assert_eq!(records.len(), 3142);

    let out = catenary(&["analyze", "--in", log.to_str().unwrap(), "--metrics-out", metrics.to_str().unwrap()]);
    assert!(out.status.success());
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.contains("rows=3142\n"));
    for key in ["mean_x", "std_x", "mean_y", "std_y", "mean_yaw", "std_yaw", "fraction_DRAG"] {
        let line = report.lines().find(|l| l.starts_with(&format!("{key}="))).unwrap_or_else(|| panic!("{key} missing"));
        let value: f64 = line.split('=').nth(1).unwrap().parse().unwrap();
        assert!(value.is_finite());
    }
    assert_eq!(fs::read_to_string(&metrics).unwrap(), report);
    // a second analysis appends
    catenary(&["analyze", "--in", log.to_str().unwrap(), "--metrics-out", metrics.to_str().unwrap()]);
    assert_eq!(fs::read_to_string(&metrics).unwrap(), report.repeat(2));
}

#[test]
fn oversized_dt_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate_to(&dir.path().join("x.csv"), &["--scenario", "rolling_line", "--dt", "0.05"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sim.dt"));
}

#[test]
fn unknown_scenario_and_missing_log_fail() {
    assert!(!catenary(&["simulate", "--scenario", "no_such_scenario"]).status.success());
    let out = catenary(&["analyze", "--in", "/nonexistent/log.csv"]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
}

#[test]
fn malformed_log_reports_its_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, format!("# {{}}\n{HEADER}\n0.001,1,2\n")).unwrap();
    let out = catenary(&["analyze", "--in", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 3"));
}

#[test]
fn json_config_file_with_base() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("short.json");
    fs::write(&config, r#"{"base": "dragging_semicircle", "sim": {"duration": 0.5}}"#).unwrap();
    let log = dir.path().join("short.csv");
    let out = simulate_to(&log, &["--scenario", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let records = read_log(std::io::BufReader::new(fs::File::open(&log).unwrap())).unwrap();
    assert_eq!(records.len(), 500);
}

#[test]
fn list_scenarios_names_the_builtins() {
    let out = catenary(&["list-scenarios"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["rolling_line", "dragging_semicircle", "drag_then_roll"] {
        assert!(text.contains(name));
    }
}
