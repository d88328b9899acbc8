use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cate-rates"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

#[test]
fn estimate_shipped_config() {
    let cfg = configs().join("estimate.toml");
    let o = run(&["estimate", "--config", cfg.to_str().unwrap(), "--workers", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let tau = v["tau_hat"].as_f64().unwrap();
    assert!((tau - 1.0).abs() < 0.5, "{tau}");
    assert!(v["window_count"].as_u64().unwrap() > 0);
}

#[test]
fn estimate_from_csv_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("x_1,a,y\n");
    for i in 0..400 {
        let x = (i as f64 + 0.5) / 400.0;
        let a = (i * 7919 % 2) as u8;
        csv += &format!("{x},{a},{}\n", 2.0 * a as f64);
    }
    std::fs::write(dir.path().join("d.csv"), csv).unwrap();
    let cfg = r#"
data = "d.csv"
[estimator]
parametrization = "mu0"
x0 = [0.5]
h = 0.5
gamma = 0.5
[estimator.second_basis]
kind = "legendre"
degree = 2
[nuisance]
pi_smoothness = 1.0
outcome_smoothness = 1.0
pi_degree = 0
outcome_degree = 0
pi_bandwidth = 0.3
outcome_bandwidth = 0.3
"#;
    let p = dir.path().join("e.toml");
    std::fs::write(&p, cfg).unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "estimate",
        "--config",
        p.to_str().unwrap(),
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
        "--format",
        "json,csv",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("estimate.json").exists());
    let csv = std::fs::read_to_string(out.join("estimate.csv")).unwrap();
    assert!(csv.starts_with("key,value\ntau_hat,"));
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "seed = 1\nunknown_key = 3\n").unwrap();
    assert_eq!(code(&run(&["sweep", "--config", p.to_str().unwrap()])), 1);
    assert_eq!(code(&run(&["estimate"])), 1);
    assert_eq!(code(&run(&["estimate", "--config", "/nonexistent.toml"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    let cfg = configs().join("lowerbound.toml");
    assert_eq!(code(&run(&["lowerbound", "--config", cfg.to_str().unwrap(), "--format", "svg"])), 1);
}

#[test]
fn singular_window_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("d.csv"), "x_1,a,y\n0.1,1,1\n0.2,0,0\n0.5,1,1\n0.9,0,1\n0.95,1,0\n0.05,0,0\n").unwrap();
    let cfg = r#"
data = "d.csv"
[estimator]
parametrization = "eta"
x0 = [0.5]
h = 0.05
gamma = 2.5
[estimator.second_basis]
kind = "legendre"
degree = 0
[nuisance]
pi_smoothness = 1.0
outcome_smoothness = 1.0
pi_degree = 0
outcome_degree = 0
pi_bandwidth = 1.0
outcome_bandwidth = 1.0
"#;
    let p = dir.path().join("e.toml");
    std::fs::write(&p, cfg).unwrap();
    let o = run(&["estimate", "--config", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn lowerbound_shipped_config() {
    let cfg = configs().join("lowerbound.toml");
    let o = run(&["lowerbound", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["hellinger"]["value"].as_f64().unwrap().is_finite());
    assert_eq!(v["hellinger"]["hypothesis_ok"], true);
    assert!(v["deltas"]["delta3"].as_f64().unwrap().abs() < 1e-12);
    assert!((v["rate"]["exponent"].as_f64().unwrap() - 0.25).abs() < 1e-12);
    assert_eq!(v["rate"]["regime_label"], "low_smoothness");
}

#[test]
fn sweep_writes_all_formats_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("sweep.toml"))
        .unwrap()
        .replace("replications = 50", "replications = 3")
        .replace("n_grid = [1000, 2000, 4000, 8000]", "n_grid = [300, 600, 1200]");
    let p = dir.path().join("s.toml");
    std::fs::write(&p, text).unwrap();
    let out = dir.path().join("a");
    let o = run(&["sweep", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["rates_rows.csv", "rates_aggregates.csv", "rates.json", "rates.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let svg = std::fs::read_to_string(out.join("rates.svg")).unwrap();
    assert_eq!(svg.matches("class=\"reference\"").count(), 2);

    let replay = dir.path().join("b");
    let json = out.join("rates.json");
    let o = run(&["sweep", "--config", json.to_str().unwrap(), "--out", replay.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code(&o), 0);
    let a = std::fs::read_to_string(json).unwrap();
    let b = std::fs::read_to_string(replay.join("rates.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn check_suite_passes() {
    let o = run(&["check", "--workers", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).lines().count() >= 10);
}
