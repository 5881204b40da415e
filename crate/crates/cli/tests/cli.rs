//! End-to-end runs of the `endosaa` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use endosaa::ndfpp::{brute_force_optimum, evaluate_solution_exact, NdfppInstance, Variant};
use serde_json::Value;
use tempfile::TempDir;

fn dataset() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/se_cities.csv")
}

fn endosaa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_endosaa")).args(args).env_remove("ENDOSAA_SOLVER").output().expect("spawn endosaa")
}

fn ok(args: &[&str]) -> String {
    let out = endosaa(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Six nodes, two facilities, two protections, W = 1.
fn toy(dir: &Path) -> PathBuf {
    let cfg = dir.join("toy.toml");
    fs::write(&cfg, "[generate]\nprotections = 2\n").unwrap();
    let out = dir.join("toy.json");
    ok(&["--config", s(&cfg), "generate", "--dataset", s(&dataset()), "--nodes", "6", "--facilities", "2", "--W", "1", "--seed", "3", "--out", s(&out)]);
    out
}

fn record(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn missing_dataset_fails() {
    let dir = TempDir::new().unwrap();
    let out = endosaa(&["generate", "--dataset", s(&dir.path().join("nope.csv")), "--out", s(&dir.path().join("x.json"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));
}

#[test]
fn generate_desk_instance() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("desk.json");
    ok(&["generate", "--dataset", s(&dataset()), "--nodes", "15", "--facilities", "4", "--W", "2", "--seed", "0", "--out", s(&out)]);
    let inst = NdfppInstance::from_json(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!((inst.nodes.len(), inst.edges.len(), inst.num_facilities(), inst.levels), (15, 36, 4, 2));
}

#[test]
fn seed_range_writes_one_file_per_seed() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("batch");
    let printed = ok(&["generate", "--dataset", s(&dataset()), "--nodes", "8", "--facilities", "2", "--seeds", "0..4", "--out", s(&out)]);
    assert_eq!(printed.lines().count(), 5);
    assert_eq!(fs::read_dir(&out).unwrap().count(), 5);
}

#[test]
fn dep_matches_brute_force() {
    let dir = TempDir::new().unwrap();
    let inst_path = toy(dir.path());
    let inst = NdfppInstance::from_json(&fs::read_to_string(&inst_path).unwrap()).unwrap();
    let out = dir.path().join("dep.json");
    ok(&["solve", "--instance", s(&inst_path), "--method", "dep", "--out", s(&out)]);
    let got = record(&out)["result"]["objective"].as_f64().unwrap();
    let (_, best) = brute_force_optimum(&inst, 1 << 20, |d| evaluate_solution_exact(&inst, Variant::Selection, d)).unwrap();
    assert!((got - best).abs() <= 1e-6 * best.max(1.0), "dep {got}, brute force {best}");
}

#[test]
fn saa_then_evaluate_and_report() {
    let dir = TempDir::new().unwrap();
    let inst_path = toy(dir.path());
    let saa = dir.path().join("saa.json");
    ok(&["solve", "--instance", s(&inst_path), "--method", "saa", "--M", "2", "--N", "5", "--Nprime", "50", "--seed", "4", "--out", s(&saa)]);
    let rec = record(&saa);
    assert_eq!(rec["method"], "saa");
    let r = &rec["result"];
    assert_eq!(r["per_replication"].as_array().unwrap().len(), 2);
    assert!(r["sgap"].as_f64().unwrap() >= r["gap_over"].as_f64().unwrap() - 1e-9);

    // The record's x̄ is accepted as a decision.
    let eval = dir.path().join("eval.json");
    ok(&["solve", "--instance", s(&inst_path), "--method", "evaluate", "--decision", s(&saa), "--exact-eval", "--out", s(&eval)]);
    let inst = NdfppInstance::from_json(&fs::read_to_string(&inst_path).unwrap()).unwrap();
    let d = serde_json::from_value(r["x_bar"].clone()).unwrap();
    let want = evaluate_solution_exact(&inst, Variant::Selection, &d).unwrap();
    let got = record(&eval)["result"]["value"].as_f64().unwrap();
    assert!((got - want).abs() <= 1e-9 * want.max(1.0), "{got} vs {want}");

    let table = ok(&["report", s(&saa), s(&saa)]);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("config,seeds,|K|"));
    assert!(lines[1].contains(",2,"), "{table}");
}

#[test]
fn vss_schema() {
    let dir = TempDir::new().unwrap();
    let inst_path = toy(dir.path());
    let out = dir.path().join("vss.json");
    ok(&["solve", "--instance", s(&inst_path), "--method", "vss", "--M", "2", "--N", "5", "--Nprime", "200", "--exact-eval", "--out", s(&out)]);
    let r = record(&out)["result"].clone();
    for key in ["eev", "v_x_bar", "vss1", "eev_sampled", "v_x_bar_sampled", "vss2", "ev_objective", "x_hat", "x_bar", "saa"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    let (eev, v) = (r["eev"].as_f64().unwrap(), r["v_x_bar"].as_f64().unwrap());
    assert!((r["vss1"].as_f64().unwrap() - (eev - v) / eev).abs() < 1e-9);
}

#[test]
fn csv_output_and_mixed_report() {
    let dir = TempDir::new().unwrap();
    let inst_path = toy(dir.path());
    let csv = ok(&["solve", "--instance", s(&inst_path), "--method", "ev", "--Nprime", "100", "--format", "csv"]);
    let mut rows = csv.lines();
    assert!(rows.next().unwrap().starts_with("method,instance,variant,seed"));
    assert!(rows.next().unwrap().starts_with("ev,"));

    let ev = dir.path().join("ev.json");
    let dep = dir.path().join("dep.json");
    ok(&["solve", "--instance", s(&inst_path), "--method", "ev", "--Nprime", "100", "--out", s(&ev)]);
    ok(&["solve", "--instance", s(&inst_path), "--method", "dep", "--out", s(&dep)]);
    let out = endosaa(&["report", s(&ev), s(&dep)]);
    assert!(!out.status.success());
}

#[test]
fn unknown_backend_is_rejected() {
    let dir = TempDir::new().unwrap();
    let inst_path = toy(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_endosaa"))
        .args(["solve", "--instance", s(&inst_path), "--method", "dep"])
        .env("ENDOSAA_SOLVER", "cplex")
        .output()
        .unwrap();
    assert!(!out.status.success());
}
