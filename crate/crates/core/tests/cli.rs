//! End-to-end runs of the `jumptime` binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn jumptime(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jumptime")).args(args).output().expect("binary runs")
}

fn jumptime_env(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jumptime"))
        .args(args)
        .env("JUMPTIME_THREADS", threads)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = jumptime(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn path(dir: &Path) -> &str {
    dir.to_str().unwrap()
}

/// Data rows of a CSV file, metadata and header skipped.
fn csv_rows(file: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(file)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn metadata(file: &Path, key: &str) -> String {
    let prefix = format!("# {key} = ");
    fs::read_to_string(file)
        .unwrap()
        .lines()
        .find_map(|l| l.strip_prefix(&prefix).map(str::to_string))
        .unwrap_or_else(|| panic!("{} has no {key}", file.display()))
}

/// Dense matrix from a `row,col,re,im` state file.
fn state_matrix(file: &Path) -> BTreeMap<(usize, usize), (f64, f64)> {
    csv_rows(file).into_iter().map(|r| ((r[0] as usize, r[1] as usize), (r[2], r[3]))).collect()
}

fn files_in(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn dephasing_plus_state_keeps_trace_and_alternates() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    run_ok(&["evolve-jumptime", "--model", "dephasing", "--state", "plus", "--n-max", "4", "--out", path(&out)]);
    let traces = csv_rows(&out.join("traces.csv"));
    assert_eq!(traces.len(), 5);
    for (n, row) in traces.iter().enumerate() {
        assert_eq!(row[0] as usize, n);
        assert!((row[1] - 1.0).abs() < 1e-12);
    }
    let s0 = state_matrix(&out.join("state_0000.csv"));
    let s1 = state_matrix(&out.join("state_0001.csv"));
    for n in 2..=4 {
        let sn = state_matrix(&out.join(format!("state_{n:04}.csv")));
        let same = if n % 2 == 0 { &s0 } else { &s1 };
        for (k, v) in &sn {
            assert!((v.0 - same[k].0).abs() < 1e-12 && (v.1 - same[k].1).abs() < 1e-12);
        }
    }
    // σ_z flips the coherence of |+⟩
    assert!((s1[&(0, 1)].0 + 0.5).abs() < 1e-12);
    assert!((s0[&(0, 1)].0 - 0.5).abs() < 1e-12);
}

#[test]
fn fock_three_loses_trace_after_three_jumps() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    run_ok(&["evolve-jumptime", "--model", "damped-oscillator", "--state", "basis:3", "--n-max", "5", "--out", path(&out)]);
    let traces: Vec<f64> = csv_rows(&out.join("traces.csv")).iter().map(|r| r[1]).collect();
    let want = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0];
    assert_eq!(traces.len(), want.len());
    for (t, w) in traces.iter().zip(want) {
        assert!((t - w).abs() < 1e-12, "{traces:?}");
    }
}

#[test]
fn zero_steps_writes_the_input_state() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    run_ok(&["evolve-jumptime", "--model", "thermal", "--state", "bloch:0.3,0.1,0.2", "--n-max", "0", "--out", path(&out)]);
    let names: Vec<String> = files_in(&out).into_keys().collect();
    assert_eq!(names, ["state_0000.csv", "traces.csv"]);
    let s = state_matrix(&out.join("state_0000.csv"));
    // ρ = (𝟙 + r·σ)/2
    assert!((s[&(0, 0)].0 - 0.6).abs() < 1e-15);
    assert!((s[&(1, 1)].0 - 0.4).abs() < 1e-15);
    assert!((s[&(0, 1)].0 - 0.15).abs() < 1e-15 && (s[&(0, 1)].1 + 0.05).abs() < 1e-15);
}

#[test]
fn check_reports_dark_states() {
    let ad = run_ok(&["check", "--model", "amplitude-damping"]);
    assert!(ad.contains("dark_dim = 1, trace-preserving: no"), "{ad}");
    let deph = run_ok(&["check", "--model", "dephasing"]);
    assert!(deph.contains("dark_dim = 0, trace-preserving: yes"), "{deph}");
    let ep = run_ok(&["check", "--model", "exceptional-point"]);
    assert!(ep.contains("dark_dim = 0, trace-preserving: yes"), "{ep}");
}

#[test]
fn exit_codes_follow_error_kind() {
    assert_eq!(jumptime(&["check"]).status.code(), Some(2));
    assert_eq!(jumptime(&["check", "--model", "no-such-model"]).status.code(), Some(2));
    assert_eq!(jumptime(&["check", "--model", "dephasing", "--set", "colour=3"]).status.code(), Some(2));
    assert_eq!(jumptime(&["check", "--model", "dephasing", "--set", "gamma=-1"]).status.code(), Some(2));
    // a spectral tolerance wide enough to call every eigenvalue real breaks the dark-state dichotomy
    assert_eq!(jumptime(&["check", "--model", "dephasing", "--tol", "spec=1"]).status.code(), Some(3));
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("never");
    let degenerate = jumptime(&[
        "sample", "--model", "amplitude-damping", "--state", "basis:0", "--jumps", "1", "--samples", "20", "--out",
        path(&out),
    ]);
    assert_eq!(degenerate.status.code(), Some(4));
    assert!(!out.exists());
}

#[test]
fn failed_runs_leave_no_partial_outputs() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    fs::create_dir(&out).unwrap();
    let failed = jumptime(&[
        "sample", "--model", "amplitude-damping", "--state", "basis:0", "--times", "1", "--jumps", "1", "--samples",
        "20", "--out", path(&out),
    ]);
    assert_eq!(failed.status.code(), Some(4));
    assert!(files_in(&out).is_empty());
    let bad = jumptime(&["wigner", "--model", "dephasing", "--grid", "1,0,5,0,1,5", "--out", path(&out)]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(files_in(&out).is_empty());
}

fn sample_args(out: &Path) -> Vec<String> {
    [
        "sample", "--model", "exceptional-point", "--state", "bloch:0.2,0.1,0.4", "--samples", "400", "--seed", "17",
        "--times", "0.5,1", "--jumps", "1,2", "--log", "--reference", "--out",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([path(out).to_string()])
    .collect()
}

#[test]
fn sampling_is_byte_reproducible_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args_a = sample_args(&a);
    let args_b = sample_args(&b);
    let ra = jumptime_env(&args_a.iter().map(String::as_str).collect::<Vec<_>>(), "1");
    let rb = jumptime_env(&args_b.iter().map(String::as_str).collect::<Vec<_>>(), "4");
    assert!(ra.status.success() && rb.status.success(), "{}", String::from_utf8_lossy(&ra.stderr));
    let (fa, fb) = (files_in(&a), files_in(&b));
    assert!(fa.contains_key("trajectories.jsonl"));
    assert!(fa.contains_key("waiting_times.csv"));
    assert_eq!(fa, fb);
}

/// Re-runs the `invocation` recorded in `file` into `dir`.
fn rerun(file: &Path, dir: &Path) -> PathBuf {
    let invocation = metadata(file, "invocation");
    let mut words: Vec<&str> = invocation.split_whitespace().collect();
    assert_eq!(words.remove(0), "jumptime");
    words.extend(["--out", path(dir)]);
    run_ok(&words);
    dir.to_path_buf()
}

#[test]
fn metadata_invocation_reproduces_every_output() {
    let tmp = TempDir::new().unwrap();
    let runs: Vec<Vec<&str>> = vec![
        vec!["evolve-jumptime", "--model", "damped-oscillator", "--set", "cutoff=6", "--set", "omega=1.5", "--state", "coherent:0.5,0.2", "--n-max", "3"],
        vec!["evolve-walltime", "--model", "thermal", "--set", "x=2", "--state", "minus", "--times", "0.1,1.5"],
        vec!["waiting-time", "--model", "exceptional-point", "--jumps", "1", "--points", "30"],
        vec!["wigner", "--model", "damped-oscillator", "--set", "cutoff=8", "--state", "basis:2", "--jumps", "0,1", "--grid", "-3,3,7,-3,3,9"],
        vec!["sample", "--model", "dephasing", "--set", "hz=0.4", "--state", "plus", "--samples", "200", "--seed", "5", "--times", "1", "--jumps", "2"],
    ];
    for (k, args) in runs.iter().enumerate() {
        let first = tmp.path().join(format!("first{k}"));
        let mut full = args.clone();
        full.extend(["--out", path(&first)]);
        run_ok(&full);
        let original = files_in(&first);
        assert!(!original.is_empty());
        for name in original.keys().filter(|n| !n.ends_with(".jsonl")) {
            let again = rerun(&first.join(name), &tmp.path().join(format!("again{k}_{name}")));
            assert_eq!(files_in(&again), original, "{args:?} via {name}");
        }
    }
}

#[test]
fn json_format_carries_the_same_metadata() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    run_ok(&["evolve-jumptime", "--model", "dephasing", "--state", "plus", "--n-max", "1", "--format", "json", "--out", path(&out)]);
    let v: serde_json::Value = serde_json::from_slice(&fs::read(out.join("traces.json")).unwrap()).unwrap();
    assert_eq!(v["metadata"]["model"], "dephasing");
    assert!(v["metadata"]["invocation"].as_str().unwrap().contains("--format json"));
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn export_round_trips_through_model_files() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("model");
    run_ok(&["export", "--model", "thermal", "--set", "x=0.5", "--out", path(&out)]);
    let file = out.join("model.json");
    let from_file = run_ok(&["check", "--model", path(&file)]);
    let from_catalog = run_ok(&["check", "--model", "thermal", "--set", "x=0.5"]);
    assert_eq!(from_file, from_catalog);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_ok(&["evolve-jumptime", "--model", path(&file), "--state", "bloch:0.1,0.2,0.3", "--n-max", "2", "--out", path(&a)]);
    run_ok(&["evolve-jumptime", "--model", "thermal", "--set", "x=0.5", "--state", "bloch:0.1,0.2,0.3", "--n-max", "2", "--out", path(&b)]);
    assert_eq!(metadata(&a.join("traces.csv"), "model_hash"), metadata(&b.join("traces.csv"), "model_hash"));
    assert_eq!(csv_rows(&a.join("state_0002.csv")), csv_rows(&b.join("state_0002.csv")));
}

#[test]
fn collisional_export_records_its_grid() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("model");
    run_ok(&["export", "--model", "collisional", "--set", "size=16", "--set", "dp=0.5", "--out", path(&out)]);
    let file = out.join("model.json");
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&file).unwrap()).unwrap();
    assert_eq!(v["momentum_grid"]["size"], 16);
    assert_eq!(v["momentum_grid"]["dp"], 0.5);
    assert_eq!(v["momentum_grid"]["p_min"], -3.75);
    assert_eq!(v["dim"], 16);
    let report = run_ok(&["check", "--model", path(&file)]);
    assert!(report.contains("dark_dim = 0, trace-preserving: yes"), "{report}");
}
