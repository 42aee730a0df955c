use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tickhawkes"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn manifest(output: &Path) -> Value {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    json(PathBuf::from(name))
}

fn simulate(dir: &Path, events: usize, seed: u64) -> (PathBuf, PathBuf) {
    let seed = seed.to_string();
    let count = events.to_string();
    ok(
        dir,
        &[
            "--seed", &seed, "simulate", "--params", "0.3,0.4,0.7,1.5", "--events", &count, "--marks",
            "geometric:0.8", "--out", "events.csv", "--quotes-out", "quotes.csv",
        ],
    );
    (dir.join("events.csv"), dir.join("quotes.csv"))
}

#[test]
fn simulate_is_reproducible_and_writes_a_manifest() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let (ea, qa) = simulate(a.path(), 300, 11);
    let (eb, qb) = simulate(b.path(), 300, 11);
    assert_eq!(fs::read(&ea).unwrap(), fs::read(&eb).unwrap());
    assert_eq!(fs::read(&qa).unwrap(), fs::read(&qb).unwrap());
    let text = fs::read_to_string(&ea).unwrap();
    assert!(text.starts_with("time,direction,mark\n"));
    assert_eq!(text.lines().count(), 301);

    let m = manifest(&ea);
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["seed"], 11);
    assert_eq!(m["extra"]["events"], 300);
    assert!(m["timings"]["total"].as_f64().unwrap() >= 0.0);
}

#[test]
fn estimate_ingest_and_vol_chain() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    simulate(d, 3000, 3);
    ok(d, &["ingest", "--quotes", "quotes.csv", "--dt", "0.001", "--out", "ingested.csv"]);
    let ingested = fs::read_to_string(d.join("ingested.csv")).unwrap();
    assert!(ingested.lines().count() > 2900);

    ok(d, &["estimate", "--input", "events.csv", "--out", "fit.json"]);
    let fit = json(d.join("fit.json"));
    assert_eq!(fit["method"], "mle");
    assert_eq!(fit["converged"], true);
    let beta: f64 = fit["beta"].as_str().unwrap().parse().unwrap();
    assert!((beta - 1.5).abs() < 0.6, "beta {beta}");

    let out = ok(d, &["vol", "--params", "fit.json", "--marks", "events.csv", "--horizon", "100", "--annualize"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["sd_ticks"].as_f64().unwrap() > 0.0);
    assert!(v["hawkes_vol_annualized"].as_f64().unwrap() > 0.0);
    assert!(v["mark_moments"]["z1_sq"].as_f64().unwrap() > 1.0);
    assert!(!d.join("fit.json.manifest.json.manifest.json").exists());
}

#[test]
fn realized_volatility_from_prices() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let mut prices = String::from("timestamp,price\n");
    for i in 0..=100 {
        prices += &format!("{i},{}\n", 100.0 + if i % 2 == 0 { 0.0 } else { 0.01 });
    }
    fs::write(d.join("p.csv"), prices).unwrap();
    ok(d, &["rv", "--prices", "p.csv", "--grid", "1s", "--out", "rv.json"]);
    let rv = json(d.join("rv.json"));
    assert_eq!(rv["returns"], 100);
    assert!(rv["realized_vol"].as_f64().unwrap() > 0.0);
    assert_eq!(manifest(&d.join("rv.json"))["command"], "rv");
}

#[test]
fn input_errors_exit_with_code_two() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    assert_eq!(run(d, &["estimate", "--input", "missing.csv", "--out", "f.json"]).status.code(), Some(2));
    let nonstationary = run(d, &["simulate", "--params", "0.3,1.0,1.0,1.5", "--events", "10", "--out", "e.csv"]);
    assert_eq!(nonstationary.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&nonstationary.stderr).starts_with("error:"));
    fs::write(d.join("bad.csv"), "t,d,m\n1,1,1\n").unwrap();
    assert_eq!(run(d, &["estimate", "--input", "bad.csv", "--out", "f.json"]).status.code(), Some(2));
    assert_eq!(run(d, &["simulate", "--params", "1,2"]).status.code(), Some(2));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fs::write(
        d.join("run.conf"),
        "# shared settings\nseed = 5\nparams = 0.2,0.1,0.1,1.0\nevents = 50\nout_dir = runs\n",
    )
    .unwrap();
    ok(d, &["--config", "run.conf", "simulate", "--out", "a.csv"]);
    let m = manifest(&d.join("runs/a.csv"));
    assert_eq!(m["seed"], 5);
    assert_eq!(m["extra"]["events"], 50);

    ok(d, &["--config", "run.conf", "--seed", "9", "simulate", "--events", "20", "--out", "b.csv"]);
    let m = manifest(&d.join("runs/b.csv"));
    assert_eq!(m["seed"], 9);
    assert_eq!(m["extra"]["events"], 20);
}

fn stream_stdin(dir: &Path, input: &[u8], args: &[&str]) -> Output {
    let mut child = bin()
        .current_dir(dir)
        .args(["stream", "--quotes", "-"])
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input).unwrap();
    child.wait_with_output().unwrap()
}

#[test]
fn stream_reads_stdin() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let (_, quotes) = simulate(d, 1200, 21);
    let out = stream_stdin(
        d,
        &fs::read(quotes).unwrap(),
        &["--method", "mle", "--length", "400", "--stride", "200", "--dt", "0.001", "--rv-grid", "1s"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("end_time,mu,alpha1,alpha2,beta,converged,hawkes_vol_annualized,hawkes_vol_relative,realized_vol")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.len() >= 4, "{} rows", rows.len());
    assert!(rows.iter().all(|r| r.len() == 9));
}

#[test]
fn empty_stream_exits_cleanly() {
    let dir = TempDir::new().unwrap();
    let out = stream_stdin(dir.path(), b"", &["--method", "mle"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let out = stream_stdin(dir.path(), b"timestamp,bid,ask\n", &["--method", "mle"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
}

#[test]
fn stream_nn_requires_a_model() {
    let dir = TempDir::new().unwrap();
    let out = stream_stdin(dir.path(), b"", &["--method", "nn"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_estimate_and_compare_guard() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "1", "make-dataset", "--n-paths", "24", "--length", "60", "--out", "train.hwkd", "--csv", "t.csv"]);
    assert_eq!(fs::read_to_string(d.join("t.csv")).unwrap().lines().count(), 1 + 24 * 60);
    ok(
        d,
        &[
            "--seed", "2", "train", "--dataset", "train.hwkd", "--epochs", "2", "--batch-size", "8", "--hidden1", "4",
            "--hidden2", "3", "--out", "m.hwkn", "--log", "log.csv", "--quiet",
        ],
    );
    assert_eq!(fs::read_to_string(d.join("log.csv")).unwrap().lines().count(), 3);
    let m = manifest(&d.join("m.hwkn"));
    assert_eq!(m["extra"]["training_fingerprints"].as_array().unwrap().len(), 24);

    simulate(d, 200, 4);
    ok(d, &["estimate", "--method", "nn", "--model", "m.hwkn", "--input", "events.csv", "--out", "nn.json"]);
    let fit = json(d.join("nn.json"));
    assert_eq!(fit["method"], "nn");
    let mu: f64 = fit["mu"].as_str().unwrap().parse().unwrap();
    assert!(mu > 0.0);

    // Scoring on the training set itself is refused.
    let out = run(d, &["compare", "--dataset", "train.hwkd", "--model", "m.hwkn", "--out", "cmp.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("training set"), "{}", String::from_utf8_lossy(&out.stderr));

    ok(d, &["--seed", "3", "make-dataset", "--n-paths", "6", "--length", "60", "--out", "test.hwkd"]);
    ok(d, &["compare", "--dataset", "test.hwkd", "--model", "m.hwkn", "--out", "cmp.json"]);
    let cmp = json(d.join("cmp.json"));
    assert!(cmp["mse_ratio"].as_f64().unwrap() > 0.0);
}

#[test]
fn corrupt_model_is_rejected() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fs::write(d.join("m.hwkn"), b"HWKN\x01\x00").unwrap();
    simulate(d, 50, 1);
    let out = run(d, &["estimate", "--method", "nn", "--model", "m.hwkn", "--input", "events.csv", "--out", "f.json"]);
    assert_eq!(out.status.code(), Some(2));
}
