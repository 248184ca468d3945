use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn kgchain() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kgchain"));
    cmd.env_remove("KGCHAIN_OUT_DIR");
    cmd
}

fn write_config(dir: &Path, cfg: &Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_vec_pretty(cfg).unwrap()).unwrap();
    path
}

fn uniform_model(l: i64, seed: u64) -> Value {
    json!({ "L": l, "eta": 1.0, "lambda": 0.0,
            "disorder": { "law": "uniform", "lo": 0.5, "hi": 1.5 }, "seed": seed })
}

fn run(sub: &str, config: &Path, extra: &[&str]) -> Output {
    kgchain().arg(sub).arg("--config").arg(config).args(extra).output().unwrap()
}

fn record(dir: &Path) -> Value {
    serde_json::from_slice(&fs::read(dir.join("run.json")).unwrap()).unwrap()
}

#[test]
fn version_prints() {
    let out = kgchain().arg("version").output().unwrap();
    assert!(out.status.success());
    assert!(!out.stdout.is_empty());
}

#[test]
fn validate_accepts_and_rejects() {
    let tmp = TempDir::new().unwrap();
    let good = write_config(tmp.path(), &json!({
        "experiment": "denominator", "model": uniform_model(5, 3),
        "params": { "interval_size": 6, "realizations": 10 } }));
    let out = kgchain().args(["validate", "--config"]).arg(&good).output().unwrap();
    assert_eq!(out.status.code(), Some(0));

    let bad = write_config(tmp.path(), &json!({
        "experiment": "denominator", "model": uniform_model(5, 3),
        "params": { "interval_size": 6, "realizations": 10, "bogus": 1 } }));
    let out = kgchain().args(["validate", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err.get("error").is_some());
}

#[test]
fn subcommand_must_match_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &json!({
        "experiment": "spectrum", "model": uniform_model(3, 1) }));
    let out = run("minami", &cfg, &["--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fixed_three_site_spectrum() {
    // Free-boundary path Laplacian on 3 sites has eigenvalues 0, 1, 3.
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = write_config(tmp.path(), &json!({
        "experiment": "spectrum",
        "model": { "L": 1, "eta": 1.0, "lambda": 0.0,
                   "disorder": { "law": "fixed", "omega_sq": [1.0, 1.0, 1.0] }, "seed": 0 } }));
    let out = run("spectrum", &cfg, &["--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let mut rdr = csv::Reader::from_path(out_dir.join("spectrum.csv")).unwrap();
    let idx = rdr.headers().unwrap().iter().position(|h| h == "nu_sq").unwrap();
    let nu_sq: Vec<f64> = rdr.records().map(|r| r.unwrap()[idx].parse().unwrap()).collect();
    for (got, want) in nu_sq.iter().zip([1.0, 2.0, 4.0]) {
        assert!((got - want).abs() < 1e-12, "{nu_sq:?}");
    }
    let rec = record(&out_dir);
    assert_eq!(rec["status"], "ok");
    assert_eq!(rec["finalized"], true);
}

fn denominator_config(dir: &Path) -> PathBuf {
    write_config(dir, &json!({
        "experiment": "denominator", "model": uniform_model(5, 11),
        "params": { "interval_size": 6, "realizations": 200 } }))
}

fn read(dir: &Path, file: &str) -> Vec<u8> {
    fs::read(dir.join(file)).unwrap()
}

#[test]
fn reruns_are_byte_identical_across_workers() {
    let tmp = TempDir::new().unwrap();
    let cfg = denominator_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    for (dir, workers) in [(&a, "1"), (&b, "1"), (&c, "8")] {
        let out = run("denominator", &cfg, &["--out", dir.to_str().unwrap(), "--workers", workers]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(read(&a, "denominator.csv"), read(&b, "denominator.csv"));
    assert_eq!(read(&a, "denominator.csv"), read(&c, "denominator.csv"));
    assert_eq!(record(&a)["config_hash"], record(&c)["config_hash"]);
    assert_eq!(record(&a)["summary"], record(&c)["summary"]);
}

#[test]
fn seed_override_changes_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &json!({
        "experiment": "spectrum", "model": uniform_model(3, 1) }));
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run("spectrum", &cfg, &["--out", a.to_str().unwrap()]).status.success());
    assert!(run("spectrum", &cfg, &["--out", b.to_str().unwrap(), "--seed", "12"]).status.success());
    assert_ne!(read(&a, "disorder.csv"), read(&b, "disorder.csv"));
    assert_ne!(record(&a)["config_hash"], record(&b)["config_hash"]);
    assert_eq!(record(&b)["master_seed"], 12);
}

#[test]
fn out_dir_from_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &json!({
        "experiment": "spectrum", "model": uniform_model(3, 1),
        "out_dir": tmp.path().join("from_config") }));
    let env_dir = tmp.path().join("from_env");
    let out = kgchain()
        .env("KGCHAIN_OUT_DIR", &env_dir)
        .args(["spectrum", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(env_dir.join("run.json").exists());
    assert!(!tmp.path().join("from_config").exists());
}

#[test]
fn budget_overrun_aborts_with_record() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = write_config(tmp.path(), &json!({
        "experiment": "expansion_residual", "model": uniform_model(3, 1),
        "params": { "sites": 3, "order": 2, "states": 2, "bracket_budget": 1 } }));
    let out = run("expansion-residual", &cfg, &["--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let rec = record(&out_dir);
    assert_eq!(rec["status"], "aborted");
    assert_eq!(rec["finalized"], false);
    assert!(rec["abort"]["reason"].is_string());
}
