use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dwellcert"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dwellcert-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn write(name: &str, body: &str) -> PathBuf {
    let p = scratch(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> (i32, Value, Output) {
    let out = bin().args(args).output().unwrap();
    let v = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (out.status.code().unwrap(), v, out)
}

const RANGED: &str = r#"{"system": {"A": [[-1.0, 0.1], [0.0, 1.2]], "J": [[1.2, 0.0], [0.0, 0.5]]},
 "dwell": {"mode": "periodic", "t": TBAR}}"#;

fn ranged(tbar: &str) -> PathBuf {
    write(&format!("ranged-{tbar}.json"), &RANGED.replace("TBAR", tbar))
}

#[test]
fn analyze_exit_codes_follow_feasibility() {
    let good = ranged("0.3");
    let bad = ranged("0.7");
    for method in [&["--degree", "4"][..], &["--segments", "8"][..]] {
        let (code, r, _) = run(&[&["analyze", good.to_str().unwrap()][..], method].concat());
        assert_eq!(code, 0, "{method:?}");
        assert_eq!(r["status"], "feasible");
        assert!(r["margin"].as_f64().unwrap() > 0.0);
        let (code, r, _) = run(&[&["analyze", bad.to_str().unwrap()][..], method].concat());
        assert_eq!(code, 1, "{method:?}");
        assert_eq!(r["status"], "infeasible");
    }
}

#[test]
fn report_echoes_input_and_settings() {
    let p = ranged("0.3");
    let (_, r, _) = run(&["analyze", p.to_str().unwrap(), "--grid", "50"]);
    assert_eq!(r["tool"], "dwellcert");
    assert_eq!(r["input_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(r["problem"]["dwell"]["t"], 0.3);
    assert_eq!(r["settings"]["options"]["grid"], 50);
    assert_eq!(r["settings"]["method"]["kind"], "sos");
    assert!(r["certificate"].is_object());
    assert!(r["counts"]["sdp_vars"].as_u64().unwrap() > 0);
}

#[test]
fn certificate_round_trips_through_verify() {
    let p = ranged("0.3");
    let report = scratch("round-trip.json");
    let (code, _, _) = run(&["analyze", p.to_str().unwrap(), "--out", report.to_str().unwrap()]);
    assert_eq!(code, 0);
    let (code, r, _) = run(&["verify", p.to_str().unwrap(), report.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(r["status"], "pass");

    // the same witness does not certify a different system
    let other = write(
        "other.json",
        r#"{"system": {"A": [[-1.0, 0.1], [0.0, 3.0]], "J": [[1.2, 0.0], [0.0, 0.5]]},
            "dwell": {"mode": "periodic", "t": 0.3}}"#,
    );
    let (code, r, _) = run(&["verify", other.to_str().unwrap(), report.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert_eq!(r["status"], "fail");
}

#[test]
fn minimum_dwell_search_matches_exact_value() {
    let p = write(
        "min.json",
        r#"{"system": {"A": [[-1.0, 0.0], [1.0, -2.0]], "J": [[2.0, 1.0], [1.0, 3.0]]},
            "dwell": {"mode": "minimum", "t": 1.0}}"#,
    );
    let (code, r, _) = run(&["search", p.to_str().unwrap(), "--degree", "6"]);
    assert_eq!(code, 0);
    let t = r["bounds"]["T"].as_f64().unwrap();
    assert!((t - 1.1406).abs() < 1e-3, "{t}");
    let exact = r["checks"]["exact_min_dwell"].as_f64().unwrap();
    assert!(t >= exact - 1e-3);
}

#[test]
fn malformed_input_exits_three_with_location() {
    let p = write("malformed.json", "{\"system\": {\"A\": [[1.0]], \"J\": [[1.0]]},\n \"dwel\": 3}");
    let (code, r, out) = run(&["analyze", p.to_str().unwrap()]);
    assert_eq!(code, 3);
    assert_eq!(r["status"], "input-error");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("dwel"), "{err}");

    let p = write("nonsquare.json", r#"{"system": {"A": [[1.0, 2.0]], "J": [[1.0]]}, "dwell": {"mode": "periodic", "t": 1.0}}"#);
    let (code, _, out) = run(&["analyze", p.to_str().unwrap()]);
    assert_eq!(code, 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("A"));

    let (code, _, _) = run(&["analyze", "/nonexistent/problem.json"]);
    assert_eq!(code, 3);
}

#[test]
fn synthesis_then_closed_loop_simulation() {
    let p = write(
        "plant.json",
        r#"{"system": {"A": [[1.0, 0.0], [1.0, 2.0]], "J": [[1.0, 1.0], [1.0, 3.0]], "Bc": [[1.0], [0.0]]},
            "dwell": {"mode": "minimum", "t": 0.5}}"#,
    );
    let report = scratch("controller.json");
    let (code, r, _) = run(&["synthesize", p.to_str().unwrap(), "--out", report.to_str().unwrap()]);
    assert_eq!(code, 0, "{r}");
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(r["checks"]["closed_loop_radius"].as_f64().unwrap() < 1.0);

    let csv = scratch("traj.csv");
    let (code, r, _) = run(&["simulate", p.to_str().unwrap(), report.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(r["status"], "stable");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,x1,x2,impulse");

    let (code, r, _) = run(&["simulate", p.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert_eq!(r["status"], "unstable");
}

#[test]
fn sampled_data_subcommands() {
    let p = write(
        "sd-gain.json",
        r#"{"sampled_data": {"A": [[0.0, 1.0], [-2.0, 0.1]], "B": [[0.0], [1.0]], "K1": [[1.0, 0.0]]},
            "dwell": {"mode": "ranged", "t_min": 0.4, "t_max": 1.5}}"#,
    );
    let (code, r, _) = run(&["sampled-data", "analyze", p.to_str().unwrap()]);
    assert_eq!(code, 0, "{r}");

    let p = write(
        "sd-plant.json",
        r#"{"sampled_data": {"A": [[0.0, 1.0], [0.0, -0.1]], "B": [[0.0], [0.1]]},
            "dwell": {"mode": "ranged", "t_min": 0.001, "t_max": 5.0}}"#,
    );
    let (code, r, _) = run(&["sampled-data", "synthesize", p.to_str().unwrap(), "--degree", "3"]);
    assert_eq!(code, 0, "{r}");
    assert!(r["checks"]["closed_loop_radius"].as_f64().unwrap() < 1.0);
    assert_eq!(r["controller"]["k1"].as_array().unwrap().len(), 1);
}

#[test]
fn count_reports_both_parameterizations() {
    let p = ranged("0.3");
    let (code, r, _) = run(&["count", p.to_str().unwrap(), "--degree", "3"]);
    assert_eq!(code, 0);
    assert_eq!(r["variable_counts"]["current"], 12);
    assert_eq!(r["variable_counts"]["looped"], 87);
}

#[test]
fn conflicting_method_flags_are_rejected() {
    let p = ranged("0.3");
    let out = bin().args(["analyze", p.to_str().unwrap(), "--degree", "4", "--segments", "3"]).output().unwrap();
    assert!(!out.status.success());
}
