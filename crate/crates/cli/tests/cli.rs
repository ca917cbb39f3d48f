use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn idlewave(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idlewave"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn error_line(out: &Output) -> serde_json::Value {
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(text.trim_end().lines().count(), 1, "{text}");
    serde_json::from_str(text.trim()).unwrap()
}

#[test]
fn model_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = idlewave(&["model", "--from", "1", "--to", "2"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "n_sockets,runtime_s,exec_runtime_s,gflops,exec_gflops");
    assert!(rows[1].ends_with(",2.4194,2.5000"), "{}", rows[1]);
    assert!(rows[2].ends_with(",4.6875,5.0000"), "{}", rows[2]);
}

#[test]
fn preset_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = idlewave(&["scenario", "--preset", "fig3b", "--out", out, "--seed", "4"], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(dir.path().join("a/trace.csv")).unwrap();
    let b = fs::read(dir.path().join("b/trace.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);

    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("a/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["preset"], "fig3b");
    assert_eq!(summary["config"]["seed"], 4);
    assert_eq!(summary["config"]["n_ranks"], 18);
    assert_eq!(summary["analysis"]["fronts"][0]["reached"], 17);
}

#[test]
fn config_file_run_and_reanalysis() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "n_ranks = 8\nn_steps = 10\nt_exec_us = 1000.0\n\n[topology]\ndirection = \"bidirectional\"\n\n[[delays]]\nrank = 2\nstep = 1\nduration_us = 4000.0\n\n[output]\ndir = \"run\"\n";
    fs::write(dir.path().join("exp.toml"), cfg).unwrap();
    let o = idlewave(&["run", "--config", "exp.toml"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let line: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((line["excess_runtime_us"].as_f64().unwrap() - 4000.0).abs() < 1e-6);

    let o = idlewave(&["analyze", "--trace", "run/trace.csv"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["fronts"][0]["reached"], 7);

    let o = idlewave(&["analyze", "--trace", "run/trace.csv", "--config", "exp.toml", "--theta", "0.5"], dir.path());
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["theta"], 0.5);
}

#[test]
fn bad_inputs_give_one_json_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("neg.toml"), "n_ranks = 4\nn_steps = 2\nt_exec_us = -5.0\n").unwrap();
    let e = error_line(&idlewave(&["run", "--config", "neg.toml"], dir.path()));
    assert_eq!(e["error"], "config");
    assert!(e["message"].as_str().unwrap().contains("t_exec_us"));

    fs::write(dir.path().join("typo.toml"), "n_ranks = 4\nn_steps = 2\nt_exec_us = 5.0\nseeed = 1\n").unwrap();
    let e = error_line(&idlewave(&["run", "--config", "typo.toml"], dir.path()));
    assert!(e["message"].as_str().unwrap().contains("seeed"));

    let e = error_line(&idlewave(&["scenario", "--preset", "fig99"], dir.path()));
    assert_eq!(e["error"], "unknown_preset");

    let e = error_line(&idlewave(&["scenario", "--preset", "fig2", "--theta", "2"], dir.path()));
    assert_eq!(e["error"], "config");

    let e = error_line(&idlewave(&["frobnicate"], dir.path()));
    assert_eq!(e["error"], "usage");

    fs::write(dir.path().join("blocker"), "file, not a dir").unwrap();
    let e = error_line(&idlewave(&["scenario", "--preset", "fig2", "--out", "blocker/x"], dir.path()));
    assert_eq!(e["error"], "io");
}

#[test]
fn small_sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = idlewave(
        &[
            "sweep", "--preset", "fig3c", "--parameter", "noise", "--values", "0,0.1",
            "--repetitions", "2", "--out", "sw",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().starts_with("noise,0,2,"));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), text);
}

#[test]
fn lists_presets() {
    let dir = tempfile::tempdir().unwrap();
    let o = idlewave(&["scenario", "--list"], dir.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["fig2", "fig3h", "fig4c", "fig7b", "fig8c"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name}");
    }
}
