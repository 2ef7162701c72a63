use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> String {
    format!("{}/tests/data/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn entrogame(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entrogame")).args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn tmp(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn without_timestamp(mut v: Value) -> Value {
    v["manifest"]["timestamp_unix"] = Value::Null;
    v
}

#[test]
fn value_of_the_example_games() {
    let doc = json(&entrogame(&["value", &data("u_ex.json")]));
    assert_eq!(doc["w_star"], "7/9");
    assert_eq!(doc["nash"], serde_json::json!(["1/9", "4/9", "4/9"]));
    assert_eq!((doc["v"].as_str(), doc["m_lo"].as_str()), (Some("1/2"), Some("-1")));
    let sha = doc["manifest"]["inputs"][0]["sha256"].as_str().unwrap();
    assert_eq!(sha.len(), 64);

    let doc = json(&entrogame(&["value", &data("mp.json")]));
    assert_eq!((doc["w_star"].as_str(), doc["v"].as_str()), (Some("1/2"), Some("0")));
}

#[test]
fn ragged_game_is_rejected() {
    let out = entrogame(&["value", &data("ragged.json")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("row 2"), "{}", stderr(&out));
    let out = entrogame(&["value", &data("missing.json")]);
    assert_eq!(out.status.code(), Some(2));
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn bounds_report_on_matching_pennies() {
    let dir = tempfile::tempdir().unwrap();
    let out = tmp(&dir, "mp.csv");
    let doc = json(&entrogame(&["bounds", &data("mp.json"), "--steps", "5", "--out", out.to_str().unwrap()]));
    assert_eq!(doc["rows"], 5);
    assert_eq!(doc["sandwich_holds"], true);
    let rows = read_csv(&out);
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[2][0], "1/4");
    let f: f64 = rows[2][1].parse().unwrap();
    assert!((f - 0.8112781244591328).abs() < 1e-12);
    let header = std::fs::read_to_string(&out).unwrap();
    assert!(header.starts_with("w,F,G1,G1_relaxed,G2,G3,G4,Q1,Q2,Q3\n"));
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(tmp(&dir, "mp.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "bounds");
}

#[test]
fn bounds_grid_is_clamped_to_the_securable_range() {
    let dir = tempfile::tempdir().unwrap();
    let out = tmp(&dir, "u.csv");
    let args = ["bounds", &data("u_prime.json"), "--w-min", "-3", "--w-max", "5", "--steps", "3"];
    let doc = json(&entrogame(&[&args[..], &["--out", out.to_str().unwrap()]].concat()));
    assert_eq!((doc["v"].as_str(), doc["m_hi"].as_str()), (Some("0"), Some("1")));
    let rows = read_csv(&out);
    assert_eq!(rows[0][0], "0");
    assert_eq!(rows[2][0], doc["w_star"].as_str().unwrap());
}

#[test]
fn usage_errors_exit_one() {
    let out = entrogame(&["bounds", &data("mp.json"), "--steps", "0", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let out = entrogame(&["simulate", "--game", &data("mp.json"), "--block-len", "4", "--blocks", "2", "--out", "t.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--source"));
    assert_eq!(entrogame(&["simulate", "--game", "g", "--source", "s", "--block-len", "4", "--blocks", "2",
        "--out", "t.csv", "--bob", "fixed:x"]).status.code(), Some(2));
    assert_eq!(entrogame(&[]).status.code(), Some(1));
    assert_eq!(entrogame(&["--version"]).status.code(), Some(0));
}

fn simulate(dir: &tempfile::TempDir, source: &str, seed: &str) -> (Value, PathBuf) {
    let out = tmp(dir, "trace.csv");
    let doc = json(&entrogame(&[
        "simulate", "--game", &data("mp.json"), "--source", &data(source), "--block-len", "10", "--blocks", "50",
        "--seed", seed, "--bob", "myopic", "--out", out.to_str().unwrap(),
    ]));
    (doc, out)
}

#[test]
fn simulate_fair_coin() {
    let dir = tempfile::tempdir().unwrap();
    let (doc, out) = simulate(&dir, "fair_bit.json", "7");
    assert_eq!(doc["target"], 0.5);
    let lambda = doc["lambda_t"].as_f64().unwrap();
    assert!(lambda > 0.35 && lambda <= 0.52, "{lambda}");
    assert_eq!(read_csv(&out).len(), 510);
    assert_eq!(read_csv(&tmp(&dir, "trace.blocks.csv")).len(), 51);

    // Byte-identical outputs on a rerun.
    let first = std::fs::read(&out).unwrap();
    let (again, _) = simulate(&dir, "fair_bit.json", "7");
    assert_eq!(std::fs::read(&out).unwrap(), first);
    assert_eq!(without_timestamp(again), without_timestamp(doc));
}

#[test]
fn simulate_full_leak_gets_the_pure_value() {
    let dir = tempfile::tempdir().unwrap();
    let (doc, _) = simulate(&dir, "leak_full.json", "3");
    assert!(doc["lambda_t"].as_f64().unwrap() <= 0.0 + 0.1);
}

#[test]
fn team_match_game() {
    let w = |file: &str| json(&entrogame(&["team", &data(file), "--restarts", "4", "--grid", "20", "--seed", "1"]));
    let perfect = w("match_perfect.json");
    assert!((perfect["w_hat"].as_f64().unwrap() - 0.25).abs() < 1e-3);
    assert!(perfect["slack"].as_f64().unwrap() >= -1e-10);
    assert!(perfect["dist"]["p_r"].is_array());
    assert!((w("match_blind.json")["w_hat"].as_f64().unwrap() - 0.5).abs() < 1e-3);
    assert!((w("single_u_ex.json")["w_hat"].as_f64().unwrap() - 7.0 / 9.0).abs() < 1e-12);
}

#[test]
fn extract_reports() {
    let doc = json(&entrogame(&["extract", "--source", &data("fair_bit.json"), "--n", "4", "--bits", "2"]));
    assert_eq!((doc["measured_tv"].as_f64(), doc["certified"].as_bool()), (Some(0.0), Some(true)));

    let args = ["extract", "--source", &data("bern03.json"), "--n", "10", "--bits", "3", "--eps", "0.05"];
    let doc = json(&entrogame(&args));
    assert_eq!(doc["certified"], true);
    assert!(doc["measured_tv"].as_f64().unwrap() <= doc["certified_bound"].as_f64().unwrap());

    let out = entrogame(&["extract", "--source", &data("bern03.json"), "--n", "4", "--bits", "5"]);
    assert_eq!(out.status.code(), Some(2));
    let out = entrogame(&["extract", "--source", &data("bern03.json"), "--n", "40", "--bits", "3"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("cap"));
}

#[test]
fn separation_check_passes() {
    let args = ["separation", &data("u_ex.json"), "--w1", "0.75", "--w2", "0.6", "--samples", "1000"];
    let doc = json(&entrogame(&args));
    assert_eq!(doc["violations"], 0);
    assert!(doc["min_d2"].as_f64().unwrap() >= doc["bound_d2"].as_f64().unwrap());
}
