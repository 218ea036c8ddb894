use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nse-asym"))
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn small_config(name: &str) -> Value {
    json!({
        "version": 1,
        "name": name,
        "seed": 3,
        "system": {"kind": "power", "params": {}},
        "generators": [1],
        "lattice_cutoff": 3,
        "cutoff": 2,
        "force": {"type": "expansion", "terms": [
            {"exponent": 1, "field": {"random": {"l2": 1.0}}}
        ]},
        "simulation": {"t0": 1.0, "t1": 60.0, "tol": 1e-9},
        "checks": {"orders": [{"n": 1, "window": [10.0, 60.0], "min": 1.5}]}
    })
}

fn write_config(dir: &Path, cfg: &Value) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(sub)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn schema() -> jsonschema::Validator {
    let text = std::fs::read_to_string(repo_file("schemas/report.schema.json")).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn run_writes_every_artifact_and_passes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &small_config("small"));
    let out = dir.path().join("out");
    let o = run("run", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["lattice.json", "coeffs.json", "trace.csv", "final_state.json", "report.json", "remainder_N1.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let report = read_json(&out.join("report.json"));
    assert!(schema().is_valid(&report));
    assert!(report.as_array().unwrap().iter().all(|c| c["pass"] == json!(true)));
    let lattice = read_json(&out.join("lattice.json"));
    let values: Vec<f64> = lattice.as_array().unwrap().iter().map(|e| e["value"].as_f64().unwrap()).collect();
    assert_eq!(values, vec![1.0, 2.0, 3.0]);
    let coeffs = read_json(&out.join("coeffs.json"));
    assert_eq!(coeffs.as_array().unwrap().len(), 3);
}

#[test]
fn csv_rows_match_snapshots() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &small_config("small"));
    let out = dir.path().join("out");
    let o = run("simulate", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    let rows = text.lines().count() - 1;
    let grid = nse_asymptotics::solver::SolverConfig::new(1.0, 60.0, 1e-9).snapshot_times();
    assert_eq!(rows, grid.len());
    let first: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first[0].parse::<f64>().unwrap(), 1.0);
    // Only `simulate` artifacts.
    assert!(!out.join("report.json").exists());
}

#[test]
fn same_seed_gives_identical_reports() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &small_config("det"));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run("verify", &cfg, &a, &[]).status.code(), Some(0));
    assert_eq!(run("verify", &cfg, &b, &[]).status.code(), Some(0));
    for f in ["report.json", "remainder_N1.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    // A different seed draws a different force.
    let c = dir.path().join("c");
    assert_eq!(run("verify", &cfg, &c, &["--seed", "4"]).status.code(), Some(0));
    assert_ne!(std::fs::read(a.join("remainder_N1.csv")).unwrap(), std::fs::read(c.join("remainder_N1.csv")).unwrap());
}

#[test]
fn failing_check_exits_one() {
    let dir = TempDir::new().unwrap();
    let mut v = small_config("strict");
    v["checks"]["orders"][0]["min"] = json!(5.0);
    let cfg = write_config(dir.path(), &v);
    let out = dir.path().join("out");
    let o = run("verify", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    let report = read_json(&out.join("report.json"));
    assert!(schema().is_valid(&report));
    assert!(report.as_array().unwrap().iter().any(|c| c["pass"] == json!(false)));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[FAIL]"));
}

#[test]
fn empty_check_list_gives_empty_report() {
    let dir = TempDir::new().unwrap();
    let mut v = small_config("empty");
    v.as_object_mut().unwrap().remove("simulation");
    v.as_object_mut().unwrap().remove("checks");
    let cfg = write_config(dir.path(), &v);
    let out = dir.path().join("out");
    let o = run("verify", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read_json(&out.join("report.json")), json!([]));
}

#[test]
fn invalid_kind_names_the_field() {
    let dir = TempDir::new().unwrap();
    let mut v = small_config("bad");
    v["system"]["kind"] = json!("powr");
    let cfg = write_config(dir.path(), &v);
    let o = run("lattice", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("system.kind") && err.contains("powr"), "{err}");
    assert!(err.contains("config.json"), "{err}");
}

#[test]
fn unknown_fields_and_versions_are_rejected() {
    let dir = TempDir::new().unwrap();
    let mut v = small_config("bad");
    v["simulation"]["tolerance"] = json!(1e-8);
    let cfg = write_config(dir.path(), &v);
    let o = run("lattice", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("simulation.tolerance"));

    let mut v = small_config("bad");
    v["version"] = json!(2);
    let cfg = write_config(dir.path(), &v);
    let o = run("lattice", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("version"));
}

#[test]
fn lattice_subcommand_prints_dump() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = run("lattice", &repo_file("configs/product_discrete.json"), &out, &[]);
    assert_eq!(o.status.code(), Some(0));
    let printed: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(printed, read_json(&out.join("lattice.json")));
    assert!(printed[0]["pair"].is_array());
}

#[test]
fn shipped_fast_configs_pass() {
    for name in ["lattice_oracle", "appendix_tail", "product_discrete"] {
        let dir = TempDir::new().unwrap();
        let o = run("run", &repo_file(&format!("configs/{name}.json")), dir.path(), &[]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(schema().is_valid(&read_json(&dir.path().join("report.json"))));
    }
}
