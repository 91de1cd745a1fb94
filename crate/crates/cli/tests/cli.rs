use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_finslerlab"));
    c.env("RUST_LOG", "off");
    c
}

fn model(name: &str) -> String {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models");
    root.join(format!("{name}.fmod")).display().to_string()
}

fn scratch(name: &str, body: &str) -> String {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn table_value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| {
            let (k, v) = l.split_once('=')?;
            (k.trim() == key).then(|| v.trim().parse::<f64>().ok()).flatten()
        })
        .unwrap_or_else(|| panic!("no row {key} in\n{text}"))
}

#[test]
fn inspect_example_at_reference_point() {
    let m = model("matsumoto_example");
    let o = run(&["inspect", "--model", &m, "--x", "1,0,1", "--y", "1,1,1"]);
    assert_eq!(o.status.code(), Some(0));
    let t = stdout(&o);
    assert_eq!(table_value(&t, "g_11"), 7.0);
    assert!((table_value(&t, "G_2") - 1.0).abs() < 1e-12);
    assert!((table_value(&t, "Gamma_1_13") - 1.0).abs() < 1e-9);
    assert!((table_value(&t, "margin[+1]") - 6.486832980505138).abs() < 1e-9);
}

#[test]
fn inspect_euclid_is_flat() {
    let m = model("euclid_concurrent");
    let o = run(&["inspect", "--model", &m, "--x", "0,0", "--y", "1,0", "--orientation", "+1"]);
    assert_eq!(o.status.code(), Some(0));
    let t = stdout(&o);
    for (k, v) in [("g_11", 1.0), ("g_12", 0.0), ("g_22", 1.0), ("N_1_1", 0.0), ("N_2_2", 0.0)] {
        assert_eq!(table_value(&t, k), v, "{k}");
    }
    assert_eq!(table_value(&t, "Fhat[+1]"), 1.0);
}

#[test]
fn inspect_json_is_valid() {
    let m = model("euclid_concurrent");
    let o = run(&["inspect", "--model", &m, "--x", "0.2,0.1", "--y", "1,0", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v.is_object());
}

#[test]
fn zero_direction_is_a_domain_error() {
    let o = run(&["inspect", "--model", &model("euclid_concurrent"), "--x", "0,0", "--y", "0,0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_models_are_parse_errors() {
    let bad = scratch("syntax.fmod", "name = s\ndim = 2\nF = sqrt(y1^2 + y2^2\nphi1 = 0\nphi2 = 0\n");
    let o = run(&["verify", "--model", &bad]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("column"));

    let o = run(&["verify", "--model", "/nonexistent/model.fmod"]);
    assert_eq!(o.status.code(), Some(3));
    let o = run(&["verify", "--bogus-flag"]);
    assert_eq!(o.status.code(), Some(3));
    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn non_homogeneous_model_fails_verification() {
    let bad = scratch("inhomogeneous.fmod", "name = bad\ndim = 2\nF = y1^2 + y2^2 + 1\nphi1 = -x1\nphi2 = -x2\n");
    let o = run(&["verify", "--model", &bad, "--samples", "10"]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let entries = v["identities"].as_array().unwrap();
    let homog = entries.iter().find(|e| e["name"] == "homogeneity").unwrap();
    assert_eq!(homog["passed"], false);
}

#[test]
fn euclid_verifies_and_csv_has_every_identity() {
    let m = model("euclid_concurrent");
    let o = run(&["verify", "--model", &m, "--samples", "20", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let mut r = csv::Reader::from_reader(o.stdout.as_slice());
    let headers = r.headers().unwrap().clone();
    assert!(headers.iter().any(|h| h == "residual"));
    assert!(r.records().count() > 40);
}

#[test]
fn tolerance_override_can_force_failure() {
    let m = model("euclid_concurrent");
    let o = run(&["verify", "--model", &m, "--samples", "10", "--tol", "inverse_metric=-1"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["verify", "--model", &m, "--tol", "nonsense"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn euclid_geodesic_is_a_straight_line() {
    let m = model("euclid_concurrent");
    let o = run(&["geodesic", "--model", &m, "--x", "0,0", "--y", "1,0", "--t-end", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let mut r = csv::Reader::from_reader(o.stdout.as_slice());
    let rows: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 1001);
    let last = &rows[1000];
    let num = |i: usize| last[i].parse::<f64>().unwrap();
    assert!((num(0) - 1.0).abs() < 1e-12);
    assert!((num(1) - 1.0).abs() < 1e-12 && num(2).abs() < 1e-12);
    assert!((num(5) - 1.0).abs() < 1e-12);
}

#[test]
fn hat_geodesic_conserves_changed_function() {
    let m = model("matsumoto_example");
    let o = run(&["geodesic", "--model", &m, "--x", "1,0,1", "--y", "1,1,1", "--t-end", "0.1", "--which", "hat"]);
    assert_eq!(o.status.code(), Some(0));
    let mut r = csv::Reader::from_reader(o.stdout.as_slice());
    let fs: Vec<f64> = r.records().map(|r| r.unwrap()[7].parse().unwrap()).collect();
    let f0 = fs[0];
    // The default orientation for this field gives F̂ = 10/(√10 + 1).
    assert!((f0 - 2.4025307335204215).abs() < 1e-12);
    assert!(fs.iter().all(|f| (f - f0).abs() <= 1e-6 * f0));
}

#[test]
fn geodesic_step_must_be_positive() {
    let m = model("euclid_concurrent");
    let o = run(&["geodesic", "--model", &m, "--x", "0,0", "--y", "1,0", "--step", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn verify_output_is_deterministic() {
    let m = model("euclid_concurrent");
    let a = run(&["verify", "--model", &m, "--samples", "15", "--seed", "7"]);
    let b = run(&["verify", "--model", &m, "--samples", "15", "--seed", "7"]);
    assert_eq!(a.stdout, b.stdout);
    let c = run(&["verify", "--model", &m, "--samples", "15", "--seed", "8"]);
    assert_ne!(a.stdout, c.stdout);
}
