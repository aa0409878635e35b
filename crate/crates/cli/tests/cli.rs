use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn problem(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../problems")
        .join(name)
}

fn detline(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_detline"))
        .args(args)
        .env_remove("DETLINE_RTOL")
        .output()
        .unwrap()
}

fn ratio_json(name: &str) -> Value {
    let path = problem(name);
    let out = detline(&[
        "ratio",
        "--problem",
        path.to_str().unwrap(),
        "--output",
        "json",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn airy_ratio_text() {
    let path = problem("airy_dirichlet.json");
    let out = detline(&["ratio", "--problem", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let line = text
        .lines()
        .find(|l| l.starts_with("det_ratio = "))
        .unwrap();
    let v: f64 = line["det_ratio = ".len()..].parse().unwrap();
    assert!((v - 1.085).abs() < 1e-3);
    assert!(text.contains("zero_mode = false"));
}

#[test]
fn airy_ratio_json() {
    let v = ratio_json("airy_dirichlet.json");
    assert!((v["ratio_re"].as_f64().unwrap() - 1.085).abs() < 1e-3);
    assert_eq!(v["zero_mode"], Value::Bool(false));
    assert_eq!(v["path"], "plain");
}

#[test]
fn tuned_airy_switches_path() {
    let v = ratio_json("airy_zero_mode.json");
    assert!((v["ratio_re"].as_f64().unwrap() - 0.050666).abs() < 1e-4);
    assert_eq!(v["zero_mode"], Value::Bool(true));
    assert_eq!(v["b_case"], 2);
}

#[test]
fn json_is_stable_and_round_trips() {
    let a = ratio_json("periodic_plain.json");
    let b = ratio_json("periodic_plain.json");
    assert_eq!(a, b);
    let text = serde_json::to_string(&a).unwrap();
    assert_eq!(serde_json::from_str::<Value>(&text).unwrap(), a);
    let keys: Vec<&String> = a.as_object().unwrap().keys().collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn oracle_flag_appends_product() {
    let path = problem("airy_dirichlet.json");
    let out = detline(&[
        "ratio",
        "--problem",
        path.to_str().unwrap(),
        "--oracle",
        "25",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("oracle_n = 25"));
    assert!(text.contains("oracle_product = "));
    assert!(text.contains("oracle_deviation = "));
    assert!(text.contains("zero_mode = false"));
}

#[test]
fn free_eigenvalues() {
    let path = problem("free_dirichlet.json");
    let out = detline(&[
        "eigenvalues",
        "--problem",
        path.to_str().unwrap(),
        "--count",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let values: Vec<f64> = stdout(&out)
        .lines()
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    for (got, want) in values.iter().zip([9.8696, 39.478, 88.826]) {
        assert!((got - want).abs() < 1e-3, "{got} vs {want}");
    }
}

#[test]
fn validate_passes() {
    let out = detline(&["validate"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(!stdout(&out).contains("FAIL"));
}

#[test]
fn describe_classifies() {
    let path = problem("twisted.json");
    let out = detline(&[
        "describe",
        "--problem",
        path.to_str().unwrap(),
        "--output",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["boundary"]["separated"], Value::Bool(false));
    assert_eq!(v["self_adjoint"]["status"], "not verified");
    let path = problem("robin.json");
    let text = stdout(&detline(&["describe", "--problem", path.to_str().unwrap()]));
    assert!(text.contains("(separated)") && text.contains("self_adjoint = pass"));
}

#[test]
fn twisted_forced_extraction() {
    let v = ratio_json("twisted.json");
    assert_eq!(v["b_case"], "system");
    let (mu, l) = (0.3f64, 4.0f64);
    let nu = (2.0 * (1.0 - 3.0 * mu * mu)).sqrt();
    let want = 8.0 * l * l * (1.0 - mu * mu) * (l * nu / 2.0).sinh().powi(2) / (nu * nu);
    let f10 = v["numerator"][0].as_f64().unwrap();
    assert!((f10 - want).abs() <= 1e-6 * want, "{f10} vs {want}");
}

#[test]
fn non_self_adjoint_exits_one() {
    let path = problem("non_self_adjoint.json");
    let out = detline(&["ratio", "--problem", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not self-adjoint"));
}

#[test]
fn input_errors_exit_two() {
    assert_eq!(detline(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        detline(&["ratio", "--problem", "/nonexistent.json"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(detline(&["ratio"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"interval":{"a":0,"b":1},"potential1":"x","potential2":"0","boundary":{"kind":"dirichlet","M":[]}}"#)
        .unwrap();
    let out = detline(&["ratio", "--problem", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("boundary"));
}

#[test]
fn force_without_zero_mode_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("force.json");
    std::fs::write(
        &f,
        r#"{"interval":{"a":0,"b":1},"potential1":"x","potential2":"0","boundary":{"kind":"dirichlet"},"extract_zero_mode":"force"}"#,
    )
    .unwrap();
    let out = detline(&["ratio", "--problem", f.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn rtol_from_environment() {
    let path = problem("airy_dirichlet.json");
    let run = |rtol: &str| {
        Command::new(env!("CARGO_BIN_EXE_detline"))
            .args(["describe", "--problem", path.to_str().unwrap()])
            .env("DETLINE_RTOL", rtol)
            .output()
            .unwrap()
    };
    let out = run("1e-8");
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("rtol 1.000000000e-8"));
    assert_eq!(run("loose").status.code(), Some(2));
}
