use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn run(args: &[&str], scenario: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hillscope"))
        .args(args)
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn verify_all_passes_on_the_model() {
    let dir = TempDir::new().unwrap();
    let o = run(&["verify-all"], &scenario("model.json"), dir.path());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}\n{}", String::from_utf8_lossy(&o.stderr));
    assert!(!stdout.contains("FAIL"));
    let m = manifest(dir.path());
    assert_eq!(m["pass"], Value::Bool(true));
    assert_eq!(m["subcommand"], "verify-all");
    for f in ["trajectory.csv", "throws.csv", "locus.csv", "folds.json", "cone.csv", "chart.csv", "pairs.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn theorem1_scan_on_the_oscillator() {
    let dir = TempDir::new().unwrap();
    let o = run(&["theorem1-scan", "--no-svg"], &scenario("oscillator.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(dir.path());
    let check = &m["checks"][0];
    assert_eq!(check["name"], "theorem1-scan.pairs");
    assert!(check["detail"]["pairs"].as_array().unwrap().len() >= 50);
    let csv = fs::read_to_string(dir.path().join("pairs.csv")).unwrap();
    assert!(csv.starts_with("seed_x,seed_y,entry_y,entry_angle_deg,conjugate_y,ok\n"));
}

#[test]
fn schema_errors_exit_with_two_and_name_the_key() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        r#"{"system": {"dimension": 2, "energy": 0.0,
                       "potential": [{"coeff": -0.5, "exponents": [0, 1]}]},
            "experiment": {"kind": "family", "base": [0.0, 1.0], "t_maks": 6.0}}"#,
    )
    .unwrap();
    let o = run(&["conjugate-locus"], &bad, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("experiment.t_maks"), "{err}");

    let o = run(&["simulate"], &dir.path().join("missing.json"), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_block_is_a_schema_error() {
    let dir = TempDir::new().unwrap();
    let o = run(&["theorem1-scan"], &scenario("perturbed.json"), dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("scan"));
    assert!(manifest(dir.path())["error"].is_string());
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for sub in ["simulate", "model-envelope", "fold-report"] {
        run(&[sub], &scenario("model.json"), a.path());
        run(&[sub, "--threads", "1"], &scenario("model.json"), b.path());
    }
    for f in ["trajectory.csv", "trajectory.svg", "throws.csv", "envelope.csv", "folds.json", "envelope.svg"] {
        let (x, y) = (fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        assert!(x == y, "{f} differs between runs");
    }
}

#[test]
fn model_envelope_outputs_and_svg_switch() {
    let dir = TempDir::new().unwrap();
    let o = run(&["model-envelope", "--no-svg"], &scenario("model.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.path().join("envelope.svg").exists());
    let env = fs::read_to_string(dir.path().join("envelope.csv")).unwrap();
    let mut lines = env.lines();
    assert_eq!(lines.next(), Some("theta_deg,t,x,y"));
    // envelope of the throws from (0, 1) is y = x^2 / 4
    for l in lines {
        let c: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((c[3] - c[2] * c[2] / 4.0).abs() < 1e-12, "{l}");
    }
    let outputs = manifest(dir.path())["outputs"].clone();
    assert_eq!(outputs, serde_json::json!(["throws.csv", "envelope.csv"]));

    let o = run(&["model-envelope"], &scenario("model.json"), dir.path());
    assert_eq!(o.status.code(), Some(0));
    let svg = fs::read_to_string(dir.path().join("envelope.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}
