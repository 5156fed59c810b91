//! Binary-level tests: exit codes, report determinism, bundled scenarios.

use std::path::PathBuf;
use std::process::{Command, Output};

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn scrlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scrlab"))
        .args(args)
        .output()
        .expect("run scrlab")
}

fn scenario_arg(name: &str) -> String {
    scenario_dir().join(name).to_string_lossy().into_owned()
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("exit code")
}

#[test]
fn check_sim_exit_codes() {
    let ok = scrlab(&["check-sim", "--scenario", &scenario_arg("open_open.json")]);
    assert_eq!(exit_code(&ok), 0);

    let failing = scrlab(&["check-sim", "--scenario", &scenario_arg("open_close.json")]);
    assert_eq!(exit_code(&failing), 1);
    let report: serde_json::Value = serde_json::from_slice(&failing.stdout).unwrap();
    assert_eq!(report["verdict"], "fails_to_commute");
    assert!(report["witness"].is_object());

    let missing = scrlab(&["check-sim", "--scenario", "/nonexistent.json"]);
    assert_eq!(exit_code(&missing), 2);
}

#[test]
fn check_sim_rejects_malformed_file() {
    let path = std::env::temp_dir().join("scrlab-malformed.json");
    std::fs::write(&path, "{ this is not json").unwrap();
    let out = scrlab(&["check-sim", "--scenario", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn counterexample_default_reproduces_flaw() {
    let out = scrlab(&["counterexample"]);
    assert_eq!(exit_code(&out), 0);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["reproduced"], true);
    let no_witness = &report["trace"]["steps"][1]["no_witness"];
    assert_eq!(no_witness["bound"], 4);
    assert_eq!(no_witness["tried"], 4681);
    assert_eq!(no_witness["degenerate"], false);
}

#[test]
fn counterexample_oracle_machine_succeeds() {
    let out = scrlab(&["counterexample", "--machine", "oracle"]);
    assert_eq!(exit_code(&out), 0);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["trace"]["steps"][0]["resp"], 2);
    assert_eq!(report["trace"]["steps"][1]["resp"], "EBADFD");
    assert_eq!(report["trace"]["outcome"]["spec_member"], true);
}

#[test]
fn counterexample_zero_witness_bound_is_degenerate() {
    let out = scrlab(&["counterexample", "--witness-bound", "0"]);
    assert_eq!(exit_code(&out), 0);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let no_witness = &report["trace"]["steps"][1]["no_witness"];
    assert_eq!(no_witness["bound"], 0);
    assert_eq!(no_witness["tried"], 1);
    assert_eq!(no_witness["degenerate"], true);
}

#[test]
fn run_exit_codes_per_machine() {
    let replay = scrlab(&[
        "run",
        "--scenario",
        &scenario_arg("pure_replay.json"),
        "--machine",
        "oracle",
    ]);
    assert_eq!(exit_code(&replay), 0);

    let flawed = scrlab(&[
        "run",
        "--scenario",
        &scenario_arg("counterexample.json"),
        "--machine",
        "rule",
    ]);
    assert_eq!(exit_code(&flawed), 1);

    let revised = scrlab(&[
        "run",
        "--scenario",
        &scenario_arg("counterexample.json"),
        "--machine",
        "oracle",
    ]);
    assert_eq!(exit_code(&revised), 0);

    // The open/close region fails the SIM gate, so running a machine over it
    // is a validation error.
    let rejected = scrlab(&[
        "run",
        "--scenario",
        &scenario_arg("open_close.json"),
        "--machine",
        "oracle",
    ]);
    assert_eq!(exit_code(&rejected), 2);
}

#[test]
fn fuzz_requires_at_least_one_run() {
    let out = scrlab(&[
        "fuzz",
        "--scenario",
        &scenario_arg("counterexample.json"),
        "--runs",
        "0",
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn reports_are_byte_identical_for_fixed_seed() {
    let divergence = scenario_arg("divergence_after_Y.json");
    let counterexample = scenario_arg("counterexample.json");
    let cases: [&[&str]; 3] = [
        &["counterexample"],
        &[
            "run",
            "--scenario",
            &divergence,
            "--machine",
            "rule",
            "--seed",
            "77",
        ],
        &[
            "fuzz",
            "--scenario",
            &counterexample,
            "--runs",
            "50",
            "--seed",
            "9",
        ],
    ];
    for args in cases {
        let first = scrlab(args);
        let second = scrlab(args);
        assert_eq!(exit_code(&first), 0, "args: {args:?}");
        assert_eq!(exit_code(&second), 0);
        assert_eq!(first.stdout, second.stdout, "args: {args:?}");
        assert!(!first.stdout.is_empty());
    }
}

#[test]
fn out_flag_writes_the_report_file() {
    let path = std::env::temp_dir().join("scrlab-report.json");
    let _ = std::fs::remove_file(&path);
    let out = scrlab(&["counterexample", "--out", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0);
    assert!(out.stdout.is_empty());
    let written: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(written["reproduced"], true);
}

#[test]
fn all_bundled_scenarios_load_and_validate() {
    let mut count = 0;
    for entry in std::fs::read_dir(scenario_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        count += 1;
        let scenario = scrlab_cli::Scenario::load(&path)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(!scenario.name.is_empty());
    }
    assert_eq!(count, 6, "expected the six bundled scenarios");
}
