use std::path::Path;
use std::process::{Command, Output};

use toltiers::rulegen::{Objective, TierRuleTable};
use toltiers::trace::load_trace;
use toltiers::SimResult;

fn toltiers(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_toltiers")).args(args).output().unwrap();
    assert!(out.status.success(), "toltiers {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_trace_simulate_train_eval() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let out = toltiers(&[
        "gen-trace",
        "--mode",
        "asr",
        "--records",
        "2500",
        "--seed",
        "4",
        "--out",
        s(&trace),
        "--version-count",
        "4",
        "--latency-ratio",
        "3",
        "--improves-levels",
        "0.2,0.19,0.18,0.15",
        "--degrades-levels",
        "0.08,0.085,0.09,0.1",
        "--varies-levels",
        "0.2,0.2,0.19,0.15",
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("categories:"));
    let t = load_trace(&trace).unwrap();
    assert_eq!((t.len(), t.version_count()), (2500, 4));
    let ratio = t.mean_server_ms(toltiers::VersionId::new(4)) / t.mean_server_ms(toltiers::VersionId::new(1));
    assert!((ratio - 3.0).abs() < 0.3, "{ratio}");

    let out = toltiers(&["simulate", "--trace", s(&trace), "--config", r#"{"policy":"osfa","version":4}"#]);
    let r: SimResult = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r.error_degradation, 0.0);
    let out = toltiers(&[
        "simulate",
        "--trace",
        s(&trace),
        "--config",
        r#"{"policy":"conc","fast":1,"slow":4,"threshold":0.6}"#,
        "--cancel-delay-ms",
        "5",
    ]);
    let r: SimResult = serde_json::from_slice(&out.stdout).unwrap();
    assert!(r.et_fraction > 0.0 && r.et_fraction < 1.0);

    let rules = dir.path().join("rules.json");
    toltiers(&[
        "train",
        "--trace",
        s(&trace),
        "--objective",
        "cost",
        "--tolerances",
        "0:0.05:0.01",
        "--out",
        s(&rules),
        "--max-trials",
        "500",
    ]);
    let table = TierRuleTable::load(&rules).unwrap();
    assert_eq!(table.objective, Objective::Cost);
    assert_eq!(table.entries.len(), 6);

    let report = dir.path().join("report");
    let out = toltiers(&[
        "eval",
        "--trace",
        s(&trace),
        "--folds",
        "2",
        "--tolerances",
        "0:0.04:0.02",
        "--thresholds",
        "0.3,0.6",
        "--out",
        s(&report),
    ]);
    assert!(!out.stdout.is_empty());
    for f in ["violations.csv", "latency.csv", "cost.csv"] {
        assert!(report.join(f).exists(), "{f}");
    }
}

#[test]
fn bad_arguments_fail_cleanly() {
    let out = Command::new(env!("CARGO_BIN_EXE_toltiers"))
        .args(["simulate", "--trace", "/nonexistent.jsonl", "--config", "{}"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
    let out = Command::new(env!("CARGO_BIN_EXE_toltiers")).args(["eval", "--out", "x"]).output().unwrap();
    assert!(!out.status.success());
}
