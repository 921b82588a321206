//! End-to-end checks of the binary: exit codes and output files.

use std::path::Path;
use std::process::{Command, Output};

fn mirrorself(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mirrorself")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&mirrorself(&["--help"])), 0);
    assert_eq!(code(&mirrorself(&["--version"])), 0);
    assert_eq!(code(&mirrorself(&["suite", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&mirrorself(&[])), 1);
    assert_eq!(code(&mirrorself(&["run", "--bogus"])), 1);
    assert_eq!(code(&mirrorself(&["run", "--seed", "abc"])), 1);
    assert_eq!(code(&mirrorself(&["run", "--gradient-variant", "hessian"])), 1);
}

#[test]
fn config_errors_exit_one_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = mirrorself(&["run", "--scenario", "hologram", "--out", out]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("scenario"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[recognition]\nlamda = 0.9\n").unwrap();
    let o = mirrorself(&["run", "--config", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("lamda"), "{}", stderr(&o));

    let invalid = dir.path().join("invalid.toml");
    std::fs::write(&invalid, "[recognition]\np_hi = 0.1\np_lo = 0.3\n").unwrap();
    let o = mirrorself(&["run", "--config", invalid.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&o), 1);

    let o = mirrorself(&["replay", "--trace", "x.csv", "--lag-s", "-1"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn missing_input_is_a_runtime_error() {
    let o = mirrorself(&["replay", "--trace", "/nonexistent/trace.csv"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("/nonexistent/trace.csv"));
    let o = mirrorself(&["run", "--config", "/nonexistent/scenario.toml"]);
    assert_ne!(code(&o), 0);
}

#[test]
fn train_mdn_writes_weights_and_curve() {
    let dir = tempfile::tempdir().unwrap();
    let o = mirrorself(&["train-mdn", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let curve = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 1001);
    assert!(dir.path().join("mdn.weights").exists());
    assert!(String::from_utf8_lossy(&o.stdout).contains("epoch 400"));
}

fn short_config(dir: &Path, kind: &str) -> String {
    let path = dir.join(format!("{kind}.toml"));
    std::fs::write(&path, format!("kind = \"{kind}\"\n[recognition]\nglobal_timeout_s = 8.0\n")).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_writes_trace_summary_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), "scripted_other");
    let out = dir.path().join("run");
    let o = mirrorself(&["run", "--config", &cfg, "--seed", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["trace.csv", "summary.json", "e_p.svg", "e_v.svg", "p_self.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["status"].is_string());
    let trace = mirrorself::harness::trace::read_trace_file(&out.join("trace.csv")).unwrap();
    assert_eq!(trace.len(), summary["ticks"].as_u64().unwrap() as usize);
}

#[test]
fn small_suite_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), "twin_async");
    let out = dir.path().join("suite");
    let o = mirrorself(&[
        "suite",
        "--config",
        &cfg,
        "--positions",
        "2",
        "--repeats",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["trials"].as_array().unwrap().len(), 2);
    let trace = out.join("traces").join("trial_p00_r00.csv");
    assert!(trace.exists());

    let replay_cfg = short_config(dir.path(), "interactive_other");
    let rout = dir.path().join("replay");
    let o = mirrorself(&[
        "replay",
        "--config",
        &replay_cfg,
        "--trace",
        trace.to_str().unwrap(),
        "--lag-s",
        "0.5",
        "--out",
        rout.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(rout.join("trace.csv").exists());
}

#[test]
fn serve_rejects_non_interactive_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), "mirror");
    let o = mirrorself(&["serve", "--config", &cfg, "--port", "0"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}
