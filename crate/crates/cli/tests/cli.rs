use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qrng(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qrng")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}\n{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
    })
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, samples: &str) -> std::path::PathBuf {
    let raw = dir.join("raw.bin");
    let out = qrng(&[
        "simulate", "--power", "0.95", "--samples", samples, "--quantum-seed", "1",
        "--classical-seed", "2", "--total-variance", "24.4", "--out", p(&raw),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    raw
}

fn entropy(dir: &Path, raw: &Path) -> std::path::PathBuf {
    let report = dir.join("entropy.json");
    let out = qrng(&["entropy", "--in", p(raw), "--power", "0.95", "--out", p(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    report
}

#[test]
fn optimal_power_reports_reference_optimum() {
    let out = qrng(&["optimal-power"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["power"].as_f64().unwrap() - 0.949).abs() < 0.005);
    assert!((v["gamma"].as_f64().unwrap() - 21.2).abs() < 0.2);

    let v = json(&qrng(&["optimal-power", "--aq", "10", "--ac", "1", "--f", "4"]));
    assert!((v["power"].as_f64().unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn snr_at_one_power_and_over_a_grid() {
    let v = json(&qrng(&["snr", "--power", "0.1"]));
    assert!((v["gamma"].as_f64().unwrap() - 1.61 / 0.364).abs() < 1e-9);
    let v = json(&qrng(&["snr", "--p-min", "0.1", "--p-max", "10", "--points", "50"]));
    assert_eq!(v.as_array().unwrap().len(), 50);
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(qrng(&[]).status.code(), Some(1));
    assert_eq!(qrng(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(qrng(&["snr", "--power", "1", "--aq", "1"]).status.code(), Some(1));
    assert_eq!(qrng(&["bench", "--runs", "3"]).status.code(), Some(1));
    assert_eq!(qrng(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.bin");
    assert_eq!(qrng(&["entropy", "--in", p(&missing), "--power", "1"]).status.code(), Some(2));
    assert_eq!(qrng(&["snr", "--power=-1"]).status.code(), Some(2));
    let garbage = dir.path().join("sweep.csv");
    fs::write(&garbage, "power_mw,variance_mv2\n1,2\n").unwrap();
    assert_eq!(qrng(&["fit", "--in", p(&garbage)]).status.code(), Some(2));
}

#[test]
fn fit_recovers_model_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let mut text = String::from("power_mw,variance_mv2\n");
    for i in 1..=20 {
        let p = 0.1 * i as f64;
        text.push_str(&format!("{p},{}\n", 16.1 * p + 0.4 * p * p + 0.36));
    }
    fs::write(&csv, text).unwrap();
    let fit_json = dir.path().join("fit.json");
    let out = qrng(&["fit", "--in", p(&csv), "--out", p(&fit_json)]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&fs::read(&fit_json).unwrap()).unwrap();
    assert!((v["aq"].as_f64().unwrap() - 16.1).abs() < 1e-9);

    let opt = json(&qrng(&["optimal-power", "--params", p(&fit_json)]));
    assert!((opt["power"].as_f64().unwrap() - 0.9487).abs() < 1e-4);
}

#[test]
fn simulate_entropy_extract_test_flow() {
    let dir = tempfile::tempdir().unwrap();
    let raw = simulate(dir.path(), "200000");
    let report = entropy(dir.path(), &raw);
    let e: Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    let h = e["h_min_per_sample"].as_f64().unwrap();
    assert!((6.6..=6.8).contains(&h), "H {h}");

    let bits = dir.path().join("bits.bin");
    let out = qrng(&[
        "extract", "--in", p(&raw), "--entropy", p(&report), "--demo-seed", "3", "--out", p(&bits),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let meta: Value = serde_json::from_slice(&fs::read(dir.path().join("bits.bin.json")).unwrap()).unwrap();
    let blocks = meta["blocks"].as_u64().unwrap();
    assert_eq!(blocks, 200_000 * 8 / 4096);
    assert_eq!(meta["output_bits"].as_u64().unwrap(), blocks * meta["m"].as_u64().unwrap());
    assert_eq!(meta["seed_sha256"].as_str().unwrap().len(), 64);

    let tests_json = dir.path().join("tests.json");
    let out = qrng(&["test", "--in", p(&bits), "--battery", "core", "--autocorr", "--report", p(&tests_json)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let reports: Value = serde_json::from_slice(&fs::read(&tests_json).unwrap()).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 4);

    // raw codes are far from uniform bits, so the battery must fail
    let out = qrng(&["test", "--in", p(&raw), "--battery", "core"]);
    assert_eq!(out.status.code(), Some(3));

    let out = qrng(&["test", "--in", p(&raw), "--spectrum"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v[0]["flatness"].as_f64().unwrap() > 0.9);
    assert!(v[0]["verdict"].is_null());
}

#[test]
fn extraction_without_a_seed_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let raw = simulate(dir.path(), "20000");
    let report = entropy(dir.path(), &raw);
    let bits = dir.path().join("bits.bin");
    let out = qrng(&["extract", "--in", p(&raw), "--entropy", p(&report), "--out", p(&bits)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--demo-seed"));
    assert!(!bits.exists());
}

#[test]
fn saved_seed_file_reproduces_demo_output() {
    let dir = tempfile::tempdir().unwrap();
    let raw = simulate(dir.path(), "50000");
    let report = entropy(dir.path(), &raw);
    let (a, b, seed) = (dir.path().join("a.bin"), dir.path().join("b.bin"), dir.path().join("seed.bin"));
    let out = qrng(&[
        "extract", "--in", p(&raw), "--entropy", p(&report), "--demo-seed", "9", "--save-seed", p(&seed),
        "--out", p(&a),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = qrng(&["extract", "--in", p(&raw), "--entropy", p(&report), "--seed-file", p(&seed), "--out", p(&b)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn pipeline_from_written_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    let outdir = dir.path().join("out");
    let out = qrng(&[
        "pipeline", "--write-config", p(&config), "--output-dir", p(&outdir), "--samples", "200000",
    ]);
    assert!(out.status.success());
    let out = qrng(&["pipeline", "--config", p(&config)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json(&out);
    assert!((summary["gamma"].as_f64().unwrap() - 21.2).abs() < 0.1);
    assert_eq!(
        fs::read(outdir.join("summary.json")).unwrap(),
        out.stdout,
        "stdout and summary.json should agree"
    );

    fs::write(&config, "{\"schema_version\": 7}").unwrap();
    assert_eq!(qrng(&["pipeline", "--config", p(&config)]).status.code(), Some(1));
}

#[test]
fn bench_reports_throughput() {
    let out = qrng(&["bench", "--n", "64", "--m", "32", "--blocks", "16"]);
    assert!(out.status.success());
    let v = json(&out);
    assert!(v["throughput_bps"].as_f64().unwrap() > 0.0);
    assert_eq!(v["run_seconds"].as_array().unwrap().len(), 5);

    let v = json(&qrng(&["bench", "--algo", "trevisan", "--n", "64", "--m", "8", "--blocks", "2"]));
    assert_eq!(v["algorithm"], "trevisan");
}
