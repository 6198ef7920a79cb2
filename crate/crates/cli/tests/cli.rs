use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn ipv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ipv")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_net(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p
}

/// x -> relu(x) -> (x/2, -x/2)
const SINGLE_PM: &str = r#"{"layers": [{"W": [[1.0]], "b": [0.0]}, {"W": [[0.5], [-0.5]], "b": [0.0, 0.0]}]}"#;

/// Second label overtakes the first for small inputs.
const REACHABLE: &str = r#"{"layers": [{"W": [[1.0]], "b": [0.0]}, {"W": [[1.0], [0.0]], "b": [0.0, 0.05]}]}"#;

/// Hidden neuron 0 is `x - 1`, dead on `[0, 1]`; neuron 1 is `x`.
const DEAD_NEURON: &str =
    r#"{"layers": [{"W": [[1.0], [1.0]], "b": [-1.0, 0.0]}, {"W": [[1.0, 1.0], [-1.0, -1.0]], "b": [0.0, 0.0]}]}"#;

#[test]
fn robust_instance_exits_zero_with_half_margin() {
    let dir = tempfile::tempdir().unwrap();
    let net = write_net(dir.path(), "pm.json", SINGLE_PM);
    let out = ipv(&["verify", "--net", net.to_str().unwrap(), "--input", "1.0", "--rho", "0.5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["verdict"], "Robust");
    let gamma = report["targets"][0]["gamma"].as_f64().unwrap();
    assert!((gamma - 0.5).abs() < 1e-5, "gamma {gamma}");
    assert!(report["targets"][0].get("runtime_ms").is_none());
}

#[test]
fn reachable_label_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let net = write_net(dir.path(), "r.json", REACHABLE);
    let out = ipv(&["verify", "--net", net.to_str().unwrap(), "--input", "0.3", "--rho", "0.3"]);
    assert_eq!(code(&out), 1);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["verdict"], "Undetermined");
    assert!(report["targets"][0]["gamma"].as_f64().unwrap() <= 0.0);
}

#[test]
fn unreachable_tolerance_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let net = write_net(dir.path(), "pm.json", SINGLE_PM);
    let out = ipv(&["verify", "--net", net.to_str().unwrap(), "--input", "1.0", "--rho", "0.5", "--gap-tol", "1e-300"]);
    assert_eq!(code(&out), 2);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["verdict"], "SolverFailed");
}

#[test]
fn usage_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let net = write_net(dir.path(), "pm.json", SINGLE_PM);
    let n = net.to_str().unwrap();
    assert_eq!(code(&ipv(&["verify", "--net", n, "--input", "1.0", "--rho", "0"])), 3);
    assert_eq!(code(&ipv(&["verify", "--net", n, "--input", "1.0,2.0", "--rho", "0.5"])), 3);
    assert_eq!(code(&ipv(&["verify", "--net", "missing.json", "--input", "1.0", "--rho", "0.5"])), 3);
    assert_eq!(code(&ipv(&["verify", "--net", n, "--input", "1.0", "--rho", "0.5", "--target", "0", "--all-targets"])), 3);
    assert_eq!(code(&ipv(&["verify", "--net", n, "--input", "1.0", "--rho", "0.5", "--target", "0"])), 3);
    assert_eq!(code(&ipv(&["verify", "--net", n, "--input", "1.0", "--rho", "0.5", "--variant", "leaky", "--alpha", "2"])), 3);
    assert_eq!(code(&ipv(&["frobnicate"])), 3);
    assert_eq!(code(&ipv(&["--help"])), 0);
}

#[test]
fn diagnose_reports_vanishing_until_pruned() {
    let dir = tempfile::tempdir().unwrap();
    let net = write_net(dir.path(), "dead.json", DEAD_NEURON);
    let n = net.to_str().unwrap();
    let out = ipv(&["diagnose", "--net", n, "--input", "0.5", "--rho", "0.5", "--no-prune"]);
    let raw: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(raw["lambda_star"].as_f64().unwrap() <= 1e-7, "{raw}");
    assert_eq!(raw["vanished"], true);

    let out = ipv(&["diagnose", "--net", n, "--input", "0.5", "--rho", "0.5"]);
    assert_eq!(code(&out), 0);
    let pruned: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(pruned["lambda_star"].as_f64().unwrap() > 1e-6, "{pruned}");
    assert_eq!(pruned["vanished"], false);
    assert!(pruned["min_eig_bound"].as_f64().unwrap() > 0.0);
}

#[test]
fn compare_lists_every_variant() {
    let dir = tempfile::tempdir().unwrap();
    let net = write_net(dir.path(), "pm.json", SINGLE_PM);
    let out = ipv(&["compare", "--net", net.to_str().unwrap(), "--input", "1.0", "--rho", "0.5", "--format", "csv"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "target,gamma_star,variant,gamma,status,gap_to_exact");
    assert_eq!(lines.count(), 6);
}

fn sweep_args<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["sweep", "--depths", "2,4,6", "--seeds", "3", "--width", "4", "--input-dim", "3", "--variants", "base,bremove"];
    v.extend_from_slice(extra);
    v
}

#[test]
fn sweep_matches_golden_file() {
    let out = ipv(&sweep_args(&[]));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 19);
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/sweep_small.csv");
    assert_eq!(text, fs::read_to_string(golden).unwrap());
}

#[test]
fn sweep_is_deterministic_and_timing_fills_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert_eq!(code(&ipv(&sweep_args(&["--out", a.to_str().unwrap()]))), 0);
    assert_eq!(code(&ipv(&sweep_args(&["--out", b.to_str().unwrap()]))), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let out = ipv(&["sweep", "--depths", "2", "--seeds", "1", "--width", "4", "--timing", "--format", "json"]);
    let rows: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2);
    assert!(rows[0]["runtime_ms"].as_f64().unwrap() > 0.0);
}

#[test]
fn fixtures_feed_verify() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fx");
    let out = ipv(&["gen-fixtures", "--out", fx.to_str().unwrap(), "--depths", "2", "--seeds", "2", "--width", "4"]);
    assert_eq!(code(&out), 0);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(fx.join("manifest.json")).unwrap()).unwrap();
    let entry = &manifest["fixtures"][1];
    let net = fx.join(entry["file"].as_str().unwrap());
    let input = format!("{}#1", fx.join("manifest.json").display());
    let target = entry["target"].as_u64().unwrap().to_string();
    let out = ipv(&["verify", "--net", net.to_str().unwrap(), "--input", &input, "--rho", "0.05", "--target", &target]);
    assert!(matches!(code(&out), 0 | 1 | 2), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["targets"][0]["target"].as_u64().unwrap().to_string(), target);
}
