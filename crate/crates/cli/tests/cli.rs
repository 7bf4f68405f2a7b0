use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn qfim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qfim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn qfim_matrix(v: &Value) -> Vec<Vec<f64>> {
    serde_json::from_value(v["qfim"].clone()).unwrap()
}

const PHASE_NOISE: &str = r#"{"version": "1", "dim": 2, "family": {"id": "phase-noise-qubit", "parameters": [0.3, 0.5]}}"#;
const BELL: &str = r#"{"version": "1", "dim": 4, "family": {"id": "bell-phase"}}"#;

#[test]
fn compute_phase_noise_qubit() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "p.json", PHASE_NOISE);
    let out = qfim(&["compute", s(&f)]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let h = qfim_matrix(&v);
    assert!((h[0][0] - 0.25).abs() < 1e-12);
    assert!((h[1][1] - 4.0 / 3.0).abs() < 1e-12);
    assert!(h[0][1].abs() < 1e-12);
    assert_eq!(h[0][1], h[1][0]);
    assert!(v.get("slds").is_none());
    assert!(v.get("crb").is_none());
}

#[test]
fn compute_bell_phase() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "b.json", BELL);
    let out = qfim(&["compute", s(&f), "--crb"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["method"], "regularized-limit");
    assert!((qfim_matrix(&v)[0][0] - 4.0).abs() < 1e-6);
    let rendered: Vec<String> = serde_json::from_value(v["crb"]["rendered"].clone()).unwrap();
    assert_eq!(rendered, vec!["Var(theta) >= 0.25".to_string()]);
}

#[test]
fn maximally_mixed_with_zero_derivative() {
    let dir = TempDir::new().unwrap();
    let f = write(
        &dir,
        "m.json",
        r#"{"version": "1", "dim": 2,
            "rho": {"re": [0.5, 0, 0, 0.5], "im": [0, 0, 0, 0]},
            "derivatives": [{"re": [0, 0, 0, 0], "im": [0, 0, 0, 0]}]}"#,
    );
    let out = qfim(&["compute", s(&f), "--sld"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(qfim_matrix(&v), vec![vec![0.0]]);
    assert_eq!(v["slds"].as_array().unwrap().len(), 1);
}

#[test]
fn fixed_method_and_output_file() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "p.json", PHASE_NOISE);
    let o = dir.path().join("out.json");
    let out = qfim(&["compute", s(&f), "--method", "integral", "--output", s(&o)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&o).unwrap()).unwrap();
    assert_eq!(v["method"], "integral");
    assert!((qfim_matrix(&v)[1][1] - 4.0 / 3.0).abs() < 1e-8);
}

#[test]
fn sld_command_includes_slds() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "p.json", PHASE_NOISE);
    let v = json(&qfim(&["sld", s(&f)]));
    let slds = v["slds"].as_array().unwrap();
    assert_eq!(slds.len(), 2);
    assert_eq!(slds[0]["re"].as_array().unwrap().len(), 4);
}

#[test]
fn results_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "p.json", PHASE_NOISE);
    let a = qfim(&["compute", s(&f), "--sld", "--crb"]);
    let b = qfim(&["compute", s(&f), "--sld", "--crb"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn malformed_files_exit_2_with_position() {
    let dir = TempDir::new().unwrap();
    let f = write(
        &dir,
        "bad.json",
        "{\n  \"version\": \"1\",\n  \"dim\": ,\n}",
    );
    let out = qfim(&["compute", s(&f)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");

    let g = write(
        &dir,
        "short.json",
        r#"{"version": "1", "dim": 2, "rho": {"re": [1], "im": [0]}, "derivatives": []}"#,
    );
    let out = qfim(&["compare", s(&g)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rho.re"));

    let h = write(
        &dir,
        "v.json",
        r#"{"dim": 2, "family": {"id": "bell-phase"}}"#,
    );
    assert_eq!(qfim(&["compute", s(&h)]).status.code(), Some(2));
    assert_eq!(
        qfim(&["compute", "/nonexistent/file.json"]).status.code(),
        Some(2)
    );
}

#[test]
fn math_failures_exit_3() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "b.json", BELL);
    let out = qfim(&["compute", s(&f), "--method", "vectorized"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("singular"));
}

#[test]
fn compare_full_rank_agrees() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "p.json", PHASE_NOISE);
    let out = qfim(&["compare", s(&f)]);
    assert_eq!(out.status.code(), Some(0));
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("verdict: agree"));
    assert_eq!(table.matches("FLAGGED").count(), 0);

    let v = json(&qfim(&["compare", s(&f), "--json"]));
    assert_eq!(v["methods"].as_array().unwrap().len(), 6);
    assert_eq!(v["deviations"].as_array().unwrap().len(), 15);
    assert_eq!(v["all_agree"], true);
}

#[test]
fn compare_bell_flags_singular_methods() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "b.json", BELL);
    let o = dir.path().join("cmp.json");
    let out = qfim(&["compare", s(&f), "--output", s(&o)]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&o).unwrap()).unwrap();
    assert_eq!(v["rank_deficient"], true);
    let refused: Vec<&str> = v["methods"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|m| m["ok"] == false)
        .map(|m| m["method"].as_str().unwrap())
        .collect();
    assert_eq!(refused, vec!["vectorized", "eigen-matrix-form", "integral"]);
    for d in v["deviations"].as_array().unwrap() {
        assert!(d["relative"].as_f64().unwrap() <= 1e-6);
    }
}

#[test]
fn compare_exit_4_on_disagreement() {
    // Three steps with an unreachable tolerance make the regularized limit
    // fail on a singular state where it applies.
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "b.json", BELL);
    let out = qfim(&["compare", s(&f), "--tol", "1e-300", "--nu-steps", "3"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn bench_smoke_and_usage_errors() {
    let out = qfim(&["bench", "--dims", "2", "--trials", "1", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[1..].iter().all(|l| l.ends_with(",pass")), "{csv}");

    assert_eq!(qfim(&["bench", "--trials", "0"]).status.code(), Some(2));
    assert_eq!(qfim(&["bench", "--dims", "1"]).status.code(), Some(2));
}

#[test]
fn bures_matches_quarter_quadratic_form() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "p.json", PHASE_NOISE);
    let v = json(&qfim(&["bures", s(&f), "--deps", "0.01,-0.002"]));
    let b = v["bures_squared"].as_f64().unwrap();
    let q = v["quarter_qfim_form"].as_f64().unwrap();
    assert!((b - q).abs() < 1e-15);
    assert!((q - 0.25 * (0.25 * 1e-4 + 4.0 / 3.0 * 4e-6)).abs() < 1e-15);

    assert_eq!(
        qfim(&["bures", s(&f), "--deps", "0.01"]).status.code(),
        Some(2)
    );
}

#[test]
fn bad_flags_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "p.json", PHASE_NOISE);
    assert_eq!(
        qfim(&["compute", s(&f), "--method", "magic"]).status.code(),
        Some(2)
    );
    assert_eq!(
        qfim(&["compute", s(&f), "--nu0", "2"]).status.code(),
        Some(2)
    );
    assert_eq!(
        qfim(&["compute", s(&f), "--quad-nodes", "2"]).status.code(),
        Some(2)
    );
}
