//! The command-line surface, run against the shipped replay fixtures.

use std::path::PathBuf;
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/replay")
}

fn exrefine(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exrefine")).args(args).env_remove("OPENAI_API_KEY").output().unwrap()
}

fn replay_args(out: &std::path::Path) -> Vec<String> {
    let cache = fixtures().join("transcripts.jsonl");
    vec![
        "--mode".into(),
        "replay".into(),
        "--cache".into(),
        cache.display().to_string(),
        "--out".into(),
        out.display().to_string(),
    ]
}

#[test]
fn refine_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    let mut args = replay_args(&runs);
    args.extend(["--workers".into(), "2".into(), "refine".into()]);
    args.push(fixtures().join("problems.jsonl").display().to_string());
    let out = exrefine(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("esnli_lady_book\trefined_valid\t2"), "{stdout}");
    assert!(stdout.contains("violin\tvalid_initially\t0"), "{stdout}");
    assert_eq!(std::fs::read_dir(&runs).unwrap().count(), 3);

    let report_dir = dir.path().join("report");
    let out = exrefine(&["report", runs.to_str().unwrap(), "--out", report_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(report_dir.join("summary.csv")).unwrap();
    assert!(summary.contains("e-SNLI,3,1,2,0,33.33,100.00"), "{summary}");
}

#[test]
fn formalise_writes_theories() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = replay_args(dir.path());
    args.push("formalise".into());
    args.push(fixtures().join("problems.jsonl").display().to_string());
    let out = exrefine(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let thy = std::fs::read_to_string(dir.path().join("violin.thy")).unwrap();
    assert!(thy.contains("theorem hypothesis:") && thy.trim_end().ends_with("end"));
}

#[test]
fn bad_arguments_are_rejected() {
    let out = exrefine(&["--stage-model", "NoSuchStage=gpt-4", "report", "."]);
    assert!(!out.status.success());
    let out = exrefine(&["--mode", "replay", "verify", "nonexistent.jsonl"]);
    assert!(!out.status.success());
    let dir = tempfile::tempdir().unwrap();
    let out = exrefine(&["report", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
}
