use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_critic-decode"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = bin().args(args).arg("--out").arg(dir).output().expect("binary runs");
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    fs::write(&path, r#"{"world": {"records": 200}}"#).unwrap();
    path.to_string_lossy().into_owned()
}

fn count(stdout: &[u8], key: &str) -> usize {
    String::from_utf8_lossy(stdout)
        .lines()
        .find_map(|l| l.strip_prefix(key))
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or_else(|| panic!("no {key:?} line"))
}

#[test]
fn zero_lambda_decoding_matches_no_critic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    run(dir.path(), &["gen-corpus", "--config", &cfg]);
    run(dir.path(), &["train-lm", "--config", &cfg]);
    run(dir.path(), &["train-critic", "--config", &cfg, "--critic", "base"]);
    run(dir.path(), &["decode", "--config", &cfg, "--no-critic"]);
    run(
        dir.path(),
        &[
            "decode", "--config", &cfg, "--critic", "base", "--lambda", "0", "--trace",
        ],
    );
    let none = fs::read_to_string(dir.path().join("outputs-none.jsonl")).unwrap();
    let base = fs::read_to_string(dir.path().join("outputs-base.jsonl")).unwrap();
    assert!(!none.is_empty());
    assert_eq!(none, base);
    let trace = fs::read_to_string(dir.path().join("trace-base.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    assert_eq!(first["i"], 1);
    assert!(first["topk"].as_array().unwrap().len() == 5);

    let out = run(
        dir.path(),
        &["evaluate", "--config", &cfg, "--critic", "base", "--lambda", "0"],
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("modified 0.0%"));
    assert!(dir.path().join("report-base.json").exists());
}

#[test]
fn base_negatives_pair_up_with_positives() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    run(dir.path(), &["gen-corpus", "--config", &cfg]);
    let out = run(dir.path(), &["build-negatives", "--config", &cfg, "--variant", "base"]);
    let positives = count(&out.stdout, "positives");
    assert!(positives > 0);
    assert_eq!(positives, count(&out.stdout, "negatives"));
    assert!(dir.path().join("negatives-base.jsonl").exists());
}

#[test]
fn repro_writes_the_comparison_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = run(dir.path(), &["repro", "--config", &cfg, "--seed", "3"]);
    let csv = fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&out.stdout), csv);
    // Header plus baseline and five critics for both decoding modes.
    assert_eq!(csv.lines().count(), 1 + 2 * 6);
    assert!(csv.starts_with("system,mode,bleu,"));
}

#[test]
fn usage_errors_exit_with_two() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin()
        .args(["decode", "--critic", "base", "--no-critic"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["train-lm", "--out"]).arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    assert_ne!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    let out = bin().args(["decode", "--critic", "nonsense"]).output().unwrap();
    assert!(!out.status.success());
}
