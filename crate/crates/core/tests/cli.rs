use std::process::{Command, Output};

use serde_json::Value;

fn blochprop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blochprop"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_stdout(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

#[test]
fn propagate_json_has_schema_and_matrix() {
    let out = blochprop(&["propagate", "--w", "0,0,1", "--r", "4,4,1", "--t", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_stdout(&out);
    assert_eq!(v["schema"], "blochprop/1");
    assert_eq!(v["command"], "propagate");
    let m = v["matrix"].as_array().unwrap();
    assert_eq!(m.len(), 3);
    // The longitudinal row decouples: e^{-R3 t}.
    let m33 = m[2][2].as_f64().unwrap();
    assert!((m33 - (-0.5f64).exp()).abs() < 1e-14);
}

#[test]
fn output_is_deterministic() {
    let args = ["verify", "--samples", "8", "--seed", "42"];
    let a = blochprop(&args);
    let b = blochprop(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn trajectory_csv_round_trips() {
    let out = blochprop(&[
        "trajectory",
        "--w",
        "0,0,3",
        "--r",
        "2,2,1",
        "--t-grid",
        "0:1:5",
        "--m0",
        "1,0,0",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema: blochprop/1"));
    let header = lines.next().unwrap();
    assert!(header.starts_with('t'));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.trim().parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0][0], 0.0);
    assert_eq!(rows[4][0], 1.0);
    // M(0) = M0
    assert!((rows[0][1] - 1.0).abs() < 1e-10);
    assert!(rows[0][2].abs() < 1e-10);
}

#[test]
fn hz_scales_the_field() {
    let a = json_stdout(&blochprop(&[
        "roots", "--w", "1,0,0", "--r", "1,1,1", "--hz",
    ]));
    let b = json_stdout(&blochprop(&[
        "roots",
        "--w",
        &format!("{},0,0", std::f64::consts::TAU),
        "--r",
        "1,1,1",
    ]));
    assert_eq!(a["inputs"]["w_rad_per_s"], b["inputs"]["w_rad_per_s"]);
}

#[test]
fn negative_rate_is_a_domain_error() {
    let out = blochprop(&["roots", "--w", "0,0,1", "--r", "-1,1,1"]);
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&out.stderr).expect("stderr is json");
    assert!(err["error"]["kind"].is_string());
}

#[test]
fn malformed_arguments_are_usage_errors() {
    assert_eq!(
        blochprop(&["propagate", "--r", "1,1"]).status.code(),
        Some(2)
    );
    assert_eq!(blochprop(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn impossible_verify_tolerance_fails() {
    let out = blochprop(&["verify", "--samples", "4", "--tol", "1e-300"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(json_stdout(&out)["pass"], false);
}
