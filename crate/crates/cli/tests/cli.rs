use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cbf_feasibility_cli::summary::{Comparison, RunSummary};
use cbf_feasibility_cli::trace_csv;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cbf-feas"))
}

fn write_config(dir: &Path, name: &str, json: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("CBF_FEAS_LOG").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

#[test]
fn reachable_slopes_complete() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"p1": 0.5, "p2": 1, "feasibility_on": true}"#);
    let out_dir = dir.path().join("out");
    let out = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let summary: RunSummary = serde_json::from_slice(&fs::read(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.status, "completed");
    assert!(summary.first_infeasible_t.is_none());
    assert!(summary.min_b >= -1e-3 && summary.min_psi1 >= -1e-3);
    // The desired speed is reached before the leader forces a slowdown.
    assert!((summary.max_v - 24.0).abs() <= 0.1);
    let rows = trace_csv::read_file(&out_dir.join("trace.csv")).unwrap();
    assert_eq!(rows.len(), 300);
    assert!(rows.iter().all(|r| r.solve_us.is_some()));

    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("status       completed"));
    assert!(stdout.lines().any(|l| l.starts_with("v            [")));
}

#[test]
fn unprotected_run_reports_the_stall() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"p1": 1, "p2": 2, "feasibility_on": false}"#);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--no-timing",
    ]);
    assert_eq!(code(&out), 2);
    let summary: RunSummary = serde_json::from_slice(&fs::read(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.status, "infeasible");
    let t = summary.first_infeasible_t.unwrap();
    let rows = trace_csv::read_file(&out_dir.join("trace.csv")).unwrap();
    let last = rows.last().unwrap();
    assert_eq!(last.t, t);
    assert_eq!(last.qp_status, "infeasible");
    assert!(rows.iter().all(|r| r.solve_us.is_none()));
}

#[test]
fn misspelled_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"masss": 1650}"#);
    let out = run(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("masss"));
    assert!(!dir.path().join("trace.csv").exists());
}

#[test]
fn missing_config_and_bad_usage_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(code(&run(&["run", "--config", missing.to_str().unwrap(), "--out", "x"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn output_directory_from_the_config() {
    let dir = TempDir::new().unwrap();
    let target = dir.path().join("from_config");
    let json = format!(r#"{{"T": 1.0, "output": {:?}}}"#, target.to_str().unwrap());
    let cfg = write_config(dir.path(), "c.json", &json);
    let out = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(trace_csv::read_file(&target.join("trace.csv")).unwrap().len(), 10);

    let bare = write_config(dir.path(), "bare.json", "{}");
    assert_eq!(code(&run(&["run", "--config", bare.to_str().unwrap()])), 1);
}

#[test]
fn unwritable_output_is_an_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"T": 1}"#);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let out_dir = blocker.join("sub");
    let args = ["--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()];
    assert_eq!(code(&run(&[&["run"][..], &args].concat())), 1);
    assert_eq!(code(&run(&[&["sweep", "--p1", "1", "--p2", "2"][..], &args].concat())), 1);
}

#[test]
fn sweep_writes_every_cell() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", "{}");
    let out_dir = dir.path().join("sweep");
    let out = run(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--p1",
        "0.5,1",
        "--p2",
        "1,2",
        "--out",
        out_dir.to_str().unwrap(),
        "--workers",
        "3",
        "--no-timing",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let mut reader = csv::Reader::from_path(out_dir.join("sweep.csv")).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        ["p1", "p2", "feasibility_on", "status", "first_infeasible_t", "min_b", "max_v", "final_v"]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 8);
    for r in &rows {
        if &r[2] == "true" {
            assert_eq!(&r[3], "completed");
            assert!(r[4].is_empty());
        }
    }
    assert!(rows.iter().any(|r| &r[2] == "false" && &r[3] == "infeasible" && !r[4].is_empty()));
    assert_eq!(fs::read_dir(out_dir.join("traces")).unwrap().count(), 8);
}

#[test]
fn sweep_needs_values_and_workers() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", "{}");
    let c = cfg.to_str().unwrap();
    let o = dir.path().join("o");
    let o = o.to_str().unwrap();
    assert_eq!(code(&run(&["sweep", "--config", c, "--p1", "1", "--out", o])), 1);
    assert_eq!(code(&run(&["sweep", "--config", c, "--p1", "1", "--p2", "-1", "--out", o])), 1);
    assert_eq!(code(&run(&["sweep", "--config", c, "--p1", "1", "--p2", "1", "--out", o, "--workers", "0"])), 1);
}

#[test]
fn braking_comparison() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"p1": 0.5, "p2": 1, "baseline": "min_braking_distance"}"#,
    );
    let out_dir = dir.path().join("cmp");
    let out = run(&["compare-braking", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let cmp: Comparison = serde_json::from_slice(&fs::read(out_dir.join("comparison.json")).unwrap()).unwrap();
    assert_eq!(cmp.feasibility.status, "completed");
    assert_eq!(cmp.braking_baseline.status, "infeasible");
    assert!(cmp.braking_baseline.first_infeasible_t.unwrap() < 30.0);

    let guarded = trace_csv::read_file(&out_dir.join("feasibility_trace.csv")).unwrap();
    let braking = trace_csv::read_file(&out_dir.join("baseline_trace.csv")).unwrap();
    assert_eq!(cmp.common_steps, braking.len());
    for (a, b) in guarded.iter().zip(&braking) {
        assert_eq!(a.t.to_bits(), b.t.to_bits());
    }
}

#[test]
fn braking_comparison_needs_the_baseline() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"baseline": "none"}"#);
    let out = run(&["compare-braking", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("baseline"));
}

#[test]
fn log_level_comes_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"T": 1}"#);
    let out_dir = dir.path().join("o");
    let args = ["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()];
    let quiet = bin().args(args).env_remove("CBF_FEAS_LOG").output().unwrap();
    assert!(quiet.stderr.is_empty());
    let chatty = bin().args(args).env("CBF_FEAS_LOG", "info").output().unwrap();
    assert!(String::from_utf8_lossy(&chatty.stderr).contains("run finished"));
    // Logs never reach standard output.
    assert_eq!(quiet.stdout, chatty.stdout);
}
