use std::path::Path;
use std::process::{Command, Output};

fn hattn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hattn")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).expect("artifact exists")).expect("valid json")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn hat_certificate_for_triangle_keys() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("hat");
    let o = hattn(&["hat", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cert = read_json(&out.join("hat_certificate.json"));
    assert_eq!(cert["bounds_ok"], true);
    assert_eq!(cert["epsilon"], 0.05);
    assert!(cert["N_used"].as_u64().unwrap() <= 256);
}

#[test]
fn verify_passes_and_forced_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let ok = hattn(&["verify", "--out", out]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));
    let bad = hattn(&["verify", "--tol", "1e-30", "--seed", "7", "--out", out]);
    assert_eq!(code(&bad), 1);
    assert!(String::from_utf8_lossy(&bad.stdout).contains("failing case in kernels"));
    let again = hattn(&["verify", "--tol", "1e-30", "--seed", "7", "--out", out]);
    assert_eq!(bad.stdout, again.stdout);
}

#[test]
fn verify_json_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = hattn(&["verify", "--json", "--out", dir.path().to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["suites"].as_array().unwrap().len(), 7);
}

#[test]
fn bench_writes_csv_with_the_representative_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"bench": {"n": [4], "d": [64], "s": [80], "j": [8], "repeats": 3, "warmup": 1, "min_sample_ms": 0.0}}"#,
    );
    let out = dir.path().join("bench");
    let o = hattn(&["bench", "--svg", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("bench.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "N,d,S,J,t_closed_ms,t_numeric_ms,speedup,predicted_ratio");
    assert!(lines[1].starts_with("4,64,80,8,") && lines[1].ends_with(",0.0015625"));
    assert!(out.join("bench.svg").exists() && out.join("bench.json").exists() && out.join("memory.json").exists());
}

#[test]
fn bench_without_svg_flag_writes_no_svg() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"bench": {"n": [3], "d": [4], "s": [4], "j": [2], "repeats": 3, "warmup": 1}}"#);
    let out = dir.path().join("b");
    assert_eq!(code(&hattn(&["bench", "--config", &cfg, "--out", out.to_str().unwrap()])), 0);
    assert!(out.join("bench.csv").exists() && !out.join("bench.svg").exists());
}

#[test]
fn train_regress_default_reports_baseline_and_model_mse() {
    let dir = tempfile::tempdir().unwrap();
    let o = hattn(&["train-regress", "--json", "--seed", "1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_json(&dir.path().join("regress_metrics.json"));
    assert!(m["baseline_mse"].as_f64().unwrap() > m["val_mse"].as_f64().unwrap());
    assert!(dir.path().join("regress_curve.csv").exists());
}

#[test]
fn train_classify_small_run_from_config_command() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"command": "train-classify", "seed": 3, "classify": {"m": 3, "n_train": 60, "n_val": 30, "epochs": 2, "batch": 20}}"#,
    );
    let out = dir.path().join("c");
    let o = hattn(&["--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_json(&out.join("classify_metrics.json"));
    assert_eq!(m["confusion"].as_array().unwrap().len(), 3);
    let conf = std::fs::read_to_string(out.join("classify_confusion.csv")).unwrap();
    assert_eq!(conf.lines().count(), 4);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write_config(dir.path(), r#"{"hat": {"epsilon": 0.05, "bogus": 1}}"#);
    assert_eq!(code(&hattn(&["hat", "--config", &unknown])), 2);
    let bad_sweep = write_config(dir.path(), r#"{"bench": {"repeats": 1}}"#);
    assert_eq!(code(&hattn(&["bench", "--config", &bad_sweep])), 2);
    assert_eq!(code(&hattn(&[])), 2);
    assert_eq!(code(&hattn(&["no-such-command"])), 2);
    assert_eq!(code(&hattn(&["hat", "--config", "/nonexistent/config.json"])), 2);
}
