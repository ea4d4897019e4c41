//! End-to-end runs of the `atb` binary.

use std::path::Path;
use std::process::{Command, Output};

fn atb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atb"))
        .args(args)
        .output()
        .expect("atb runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn train_evaluate_replay() {
    let dir = tempfile::tempdir().unwrap();
    let agent = dir.path().join("agent.json");
    let transcript = dir.path().join("session.jsonl");
    let out = atb(&[
        "train",
        "--domain",
        "fraction-arithmetic",
        "--problems",
        "100",
        "--stop-after",
        "0",
        "--labels",
        "canonical",
        "--agent-file",
        path(&agent),
        "--transcript-file",
        path(&transcript),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("trained on 100 problems"));

    let out = atb(&[
        "evaluate",
        "--domain",
        "fraction-multiply",
        "--seed",
        "1000",
        "--agent-file",
        path(&agent),
        "--min-accuracy",
        "1",
    ]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).contains("PASS min-accuracy"));

    let replayed = dir.path().join("replayed.json");
    let out = atb(&[
        "replay",
        "--transcript-file",
        path(&transcript),
        "--agent-file",
        path(&agent),
        "--out",
        path(&replayed),
    ]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert_eq!(
        std::fs::read(&replayed).unwrap(),
        std::fs::read(&agent).unwrap()
    );
}

#[test]
fn failed_checks_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let agent = dir.path().join("empty.json");
    std::fs::write(&agent, atb_core::KnowledgeBase::new().to_json()).unwrap();
    let out = atb(&[
        "evaluate",
        "--domain",
        "square-25",
        "--agent-file",
        path(&agent),
        "--min-accuracy",
        "0.5",
        "--report",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["evaluation"]["accuracy"], 0.0);
    assert_eq!(report["checks"][0]["passed"], false);

    // too few problems to ever see two unaided solves in a row
    let out = atb(&[
        "train",
        "--domain",
        "fraction-multiply",
        "--problems",
        "2",
        "--stop-after",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL converged"));
}

#[test]
fn replay_detects_a_different_agent() {
    let dir = tempfile::tempdir().unwrap();
    let (agent, transcript, other) = (
        dir.path().join("a.json"),
        dir.path().join("t.jsonl"),
        dir.path().join("b.json"),
    );
    let train = |file: &Path, seed: &str, transcript: &Path| {
        let out = atb(&[
            "train",
            "--domain",
            "fraction-multiply",
            "--problems",
            "3",
            "--stop-after",
            "0",
            "--seed",
            seed,
            "--agent-file",
            path(file),
            "--transcript-file",
            path(transcript),
        ]);
        assert!(out.status.success());
    };
    train(&agent, "1", &transcript);
    train(&other, "2", &dir.path().join("unused.jsonl"));
    let out = atb(&[
        "replay",
        "--transcript-file",
        path(&transcript),
        "--agent-file",
        path(&other),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL identical-agent"));
}

#[test]
fn biased_training_only_solves_numerator_one() {
    let dir = tempfile::tempdir().unwrap();
    let agent = dir.path().join("biased.json");
    let out = atb(&[
        "train",
        "--domain",
        "fraction-multiply",
        "--bias",
        "numerator-one",
        "--problems",
        "100",
        "--stop-after",
        "0",
        "--labels",
        "canonical",
        "--agent-file",
        path(&agent),
    ]);
    assert!(out.status.success());
    let biased = atb(&[
        "evaluate",
        "--domain",
        "fraction-multiply",
        "--bias",
        "numerator-one",
        "--seed",
        "9",
        "--agent-file",
        path(&agent),
        "--min-accuracy",
        "1",
    ]);
    assert!(biased.status.success(), "{}", stdout(&biased));
    let unbiased = atb(&[
        "evaluate",
        "--domain",
        "fraction-multiply",
        "--problems",
        "40",
        "--agent-file",
        path(&agent),
        "--min-accuracy",
        "1",
    ]);
    assert_eq!(unbiased.status.code(), Some(1));
}

#[test]
fn bad_input_exits_with_two() {
    let out = atb(&["train", "--domain", "chess"]);
    assert_eq!(out.status.code(), Some(2));
    let out = atb(&[
        "evaluate",
        "--domain",
        "square-25",
        "--agent-file",
        "/nonexistent/agent.json",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/agent.json"));
}
