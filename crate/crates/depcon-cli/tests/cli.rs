//! End-to-end checks of the depcon binary: subcommands, exit codes and the
//! cross-process byte-determinism of event logs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata").join(name)
}

fn depcon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_depcon"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn validate_accepts_the_nav_model() {
    let out = depcon(&["validate", data("nav.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert_eq!(stdout(&out).trim(), "ok");
}

#[test]
fn validate_rejects_cycles() {
    let out = depcon(&["validate", data("cycle.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("CyclicDependency"));
}

#[test]
fn malformed_json_exits_two() {
    let out = depcon(&["validate", data("malformed.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn nav_file_matches_the_builtin_fixture() {
    let app = depcon_cli::load_application(&data("nav.json")).unwrap();
    assert_eq!(app, depcon_core::testutil::nav_app());
    let cluster = depcon_cli::load_cluster(&data("cluster3.json")).unwrap();
    let mut expected = depcon_core::testutil::nav_cluster();
    expected.links = cluster.links.clone();
    assert_eq!(cluster, expected);
}

#[test]
fn plan_emits_four_phases() {
    let out = depcon(&[
        "--format",
        "json",
        "plan",
        data("nav.json").to_str().unwrap(),
        data("cluster3.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let plan: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(plan["plan"]["phases"].as_array().unwrap().len(), 4);
    assert_eq!(plan["mapping"]["vn1"], "n1");
    assert_eq!(plan["mapping"]["vn2"], "n2");
    assert_eq!(plan["mapping"]["vn3"], "n3");
    // Dependency and both topic routes cross node pairs.
    assert!(plan["link_flows"].as_array().unwrap().iter().any(|l| l["flows"].as_u64() == Some(1)));
}

#[test]
fn plan_rejects_oversubscription() {
    let out = depcon(&[
        "plan",
        data("nav.json").to_str().unwrap(),
        data("oversub_cluster.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("NoFeasibleNode"));
}

#[test]
fn plan_rejects_label_violations() {
    let out = depcon(&[
        "plan",
        data("label_violation.json").to_str().unwrap(),
        data("cluster3.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FlowViolation"));
}

#[test]
fn run_without_crashes_converges() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    let out = depcon(&[
        "--format",
        "json",
        "run",
        data("nav.json").to_str().unwrap(),
        data("cluster3.json").to_str().unwrap(),
        data("scenario_nocrash.json").to_str().unwrap(),
        "--out",
        log.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let report: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(report["outcome"], "converged");
    assert_eq!(report["recoveries"], 0);
    assert_eq!(report["components"]["gps"], "active");
    assert!(log.exists());
}

#[test]
fn run_with_spare_recovers_once() {
    let out = depcon(&[
        "--format",
        "json",
        "run",
        data("nav.json").to_str().unwrap(),
        data("cluster3.json").to_str().unwrap(),
        data("scenario_gps_crash.json").to_str().unwrap(),
        "--out",
        "/dev/null",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let report: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(report["outcome"], "converged");
    assert_eq!(report["failures"], 1);
    assert_eq!(report["recoveries"], 1);
}

#[test]
fn run_without_spare_exits_three() {
    let out = depcon(&[
        "run",
        data("nav_nospare.json").to_str().unwrap(),
        data("cluster_nospare.json").to_str().unwrap(),
        data("scenario_n9_crash.json").to_str().unwrap(),
        "--out",
        "/dev/null",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stdout(&out));
    assert!(stdout(&out).contains("Unrecoverable"));
}

#[test]
fn run_past_horizon_exits_four() {
    let out = depcon(&[
        "run",
        data("nav.json").to_str().unwrap(),
        data("cluster3.json").to_str().unwrap(),
        data("scenario_tiny_horizon.json").to_str().unwrap(),
        "--out",
        "/dev/null",
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", stdout(&out));
}

#[test]
fn seed_override_changes_uniform_delay_logs() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.json");
    std::fs::write(
        &scenario,
        r#"{ "crashes": [], "delay": { "range": [1, 3] }, "seed": 1, "horizon": 10000 }"#,
    )
    .unwrap();
    let run_with = |seed: &str, path: &Path| {
        let out = depcon(&[
            "run",
            data("nav.json").to_str().unwrap(),
            data("cluster3.json").to_str().unwrap(),
            scenario.to_str().unwrap(),
            "--seed",
            seed,
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
    };
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    run_with("7", &a);
    run_with("8", &b);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

/// The binary reproduces the engine's checked-in golden log byte for byte
/// from the JSON input files.
#[test]
fn golden_log_reproduced_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("golden.jsonl");
    let out = depcon(&[
        "run",
        data("nav.json").to_str().unwrap(),
        data("cluster3.json").to_str().unwrap(),
        data("scenario_gps_crash.json").to_str().unwrap(),
        "--out",
        log.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let golden = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../depcon-core/tests/golden/sensor_gps_nav.jsonl");
    assert_eq!(
        std::fs::read(&log).unwrap(),
        std::fs::read(&golden).unwrap(),
        "binary run diverged from the golden log"
    );
}

/// Two separate process invocations with the same inputs and seed produce
/// byte-identical event logs.
#[test]
fn event_logs_are_identical_across_process_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let mut logs = Vec::new();
    for name in ["a.jsonl", "b.jsonl"] {
        let path = dir.path().join(name);
        let out = depcon(&[
            "run",
            data("nav.json").to_str().unwrap(),
            data("cluster3.json").to_str().unwrap(),
            data("scenario_gps_crash.json").to_str().unwrap(),
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        logs.push(std::fs::read(&path).unwrap());
    }
    assert!(!logs[0].is_empty());
    assert_eq!(logs[0], logs[1]);
}
