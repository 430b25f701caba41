//! Black-box tests of the `uniqueid-sim` binary: exit codes, output files,
//! determinism, and tamper detection through `verify`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_uniqueid-sim")
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

const SMALL: &str = r#"{
  "seed": 5,
  "epochs": 8,
  "cities": [{ "city": 0, "genesis_verifiers": 10, "arrival_rate": 6.0 }],
  "biometric": { "tau": 0.74 }
}"#;

#[test]
fn run_writes_three_outputs_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), SMALL);
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for file in ["ledger.jsonl", "metrics.csv", "report.json"] {
        assert!(out_dir.join(file).exists(), "{file} missing");
    }
    // Stdout carries one JSON object.
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary["state_hash"].is_string());
    assert_eq!(summary["epochs"], 8);
}

#[test]
fn repeated_runs_are_byte_identical_and_seed_overrides_diverge() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), SMALL);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for dir in [&a, &b] {
        let out = run(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    let out = run(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "99",
        "--out",
        c.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    for file in ["ledger.jsonl", "metrics.csv", "report.json"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file} not reproducible"
        );
    }
    assert_ne!(
        fs::read(a.join("ledger.jsonl")).unwrap(),
        fs::read(c.join("ledger.jsonl")).unwrap(),
        "seed override must change the run"
    );
}

#[test]
fn malformed_config_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "{ not json");
    let out = run(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let missing = tmp.path().join("nope.json");
    let out = run(&["run", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_accepts_untampered_and_flags_byte_flips() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), SMALL);
    let out_dir = tmp.path().join("out");
    assert!(run(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap()
    ])
    .status
    .success());
    let ledger = out_dir.join("ledger.jsonl");

    let out = run(&["verify", "--ledger", ledger.to_str().unwrap()]);
    assert!(out.status.success());
    let verdict: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(verdict["ok"], true);
    // The replayed hash equals the recorded report hash.
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(verdict["state_hash"], report["state_hash"]);

    // Flip one hex digit of a mid-file hash.
    let text = fs::read_to_string(&ledger).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let victim = lines.len() / 2;
    let pos = lines[victim].find("\"hash\":\"").unwrap() + 8;
    let mut bytes = lines[victim].clone().into_bytes();
    bytes[pos] = if bytes[pos] == b'0' { b'1' } else { b'0' };
    lines[victim] = String::from_utf8(bytes).unwrap();
    let tampered = tmp.path().join("tampered.jsonl");
    fs::write(&tampered, lines.join("\n")).unwrap();

    let out = run(&["verify", "--ledger", tampered.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let verdict: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(verdict["ok"], false);
    assert_eq!(verdict["first_invalid_height"], victim + 1);
}

#[test]
fn verify_unreadable_file_exits_two() {
    let out = run(&["verify", "--ledger", "/nonexistent/ledger.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn attack_sweep_writes_monotone_frontier() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let config = repo_config("attack_frontier.json");
    let out = run(&[
        "attack",
        "--config",
        config.to_str().unwrap(),
        "--sweep",
        "3..10",
        "--trials",
        "2000",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let frontier = fs::read_to_string(out_dir.join("frontier.csv")).unwrap();
    let rows: Vec<&str> = frontier.lines().skip(1).collect();
    assert_eq!(rows.len(), 8, "sweep 3..10 is eight rows");
    let mut last = -1.0f64;
    for row in &rows {
        let fields: Vec<&str> = row.split(',').collect();
        let p: f64 = fields[1].parse().unwrap();
        assert!(p >= last, "success_prob must be non-decreasing");
        last = p;
    }
    for k in 3..=10 {
        assert!(out_dir.join(format!("report_k{k}.json")).exists());
    }
}

#[test]
fn attack_requires_plan_and_positive_trials() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), SMALL);
    let out = run(&[
        "attack",
        "--config",
        config.to_str().unwrap(),
        "--sweep",
        "3..5",
        "--trials",
        "10",
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "plan missing is a usage error");

    let frontier = repo_config("attack_frontier.json");
    let out = run(&[
        "attack",
        "--config",
        frontier.to_str().unwrap(),
        "--sweep",
        "3..5",
        "--trials",
        "0",
        "--out",
        tmp.path().join("o2").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "zero trials is a usage error");
}

#[test]
fn shipped_configs_validate() {
    for name in ["baseline.json", "attack_frontier.json", "audit_stress.json"] {
        let text = fs::read_to_string(repo_config(name)).unwrap();
        uniqueid_core::ScenarioConfig::from_json(&text)
            .unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}
