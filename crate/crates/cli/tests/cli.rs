use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn wlingam(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wlingam"))
        .current_dir(dir)
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = wlingam(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn fails(dir: &Path, args: &[&str], code: i32, needle: &str) {
    let out = wlingam(dir, args);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(code), "{args:?}: {stderr}");
    assert!(stderr.contains(needle), "{args:?}: `{needle}` not in {stderr}");
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Small synthetic panel with a fitted model in a fresh directory.
fn fitted(subjects: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--spec", "paper-shaped", "--seed", "7", "--subjects", subjects, "--out", "."]);
    ok(dir.path(), &["fit"]);
    dir
}

#[test]
fn synth_then_fit() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--spec", "paper-shaped", "--seed", "7", "--subjects", "300", "--out", "d/"]);
    for f in ["panel.csv", "schema.json", "mask.json", "truth.json", "synth.manifest.json"] {
        assert!(dir.path().join("d").join(f).exists(), "{f}");
    }
    ok(dir.path(), &["fit", "--panel", "d/panel.csv", "--mask", "d/mask.json"]);
    assert!(dir.path().join("model.json").exists());
    let manifest = read_json(dir.path().join("fit.manifest.json"));
    assert_eq!(manifest["command"], "fit");
    assert_eq!(manifest["inputs"]["panel.csv"].as_str().unwrap().len(), 64);
    assert!(manifest["inputs"]["schema.json"].is_string(), "schema picked up beside the panel");
}

#[test]
fn bootstrap_is_reproducible_and_worker_independent() {
    let dir = fitted("300");
    let p = dir.path();
    ok(p, &["bootstrap", "--B", "50", "--seed", "1", "--out", "a"]);
    ok(p, &["bootstrap", "--B", "50", "--seed", "1", "--out", "b"]);
    ok(p, &["bootstrap", "--B", "50", "--seed", "1", "--workers", "4", "--out", "c"]);
    let a = std::fs::read(p.join("a/bootstrap.json")).unwrap();
    assert_eq!(a, std::fs::read(p.join("b/bootstrap.json")).unwrap());
    assert_eq!(a, std::fs::read(p.join("c/bootstrap.json")).unwrap());
    assert_eq!(std::fs::read(p.join("a/draws.bin")).unwrap(), std::fs::read(p.join("c/draws.bin")).unwrap());

    let mut ma = read_json(p.join("a/bootstrap.manifest.json"));
    let mut mb = read_json(p.join("b/bootstrap.manifest.json"));
    ma.as_object_mut().unwrap().remove("createdUnix");
    mb.as_object_mut().unwrap().remove("createdUnix");
    assert_eq!(ma, mb);

    ok(p, &["bootstrap", "--B", "50", "--seed", "2", "--out", "d"]);
    assert_ne!(a, std::fs::read(p.join("d/bootstrap.json")).unwrap());
}

#[test]
fn horizon_beyond_panel_is_a_validation_error() {
    let dir = fitted("200");
    fails(dir.path(), &["effects", "--horizons", "0,1,2,9"], 1, "horizon 9");
    assert!(!dir.path().join("effects.csv").exists());
}

#[test]
fn env_overrides_flags() {
    let dir = fitted("200");
    let out = Command::new(env!("CARGO_BIN_EXE_wlingam"))
        .current_dir(dir.path())
        .args(["effects"])
        .env("WLINGAM_HORIZONS", "0,7")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizon 7"));
}

#[test]
fn effects_csv_and_json_agree() {
    let dir = fitted("200");
    ok(dir.path(), &["effects", "--format", "csv"]);
    ok(dir.path(), &["effects", "--format", "json"]);
    let csv = std::fs::read_to_string(dir.path().join("effects.csv")).unwrap();
    let rows = read_json(dir.path().join("effects.json"));
    assert_eq!(csv.lines().count() - 1, rows.as_array().unwrap().len());
    assert!(csv.starts_with("source,target,lag,estimate"));
}

#[test]
fn bad_inputs_name_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    fails(dir.path(), &["fit", "--panel", "nope.csv"], 1, "--panel");
    fails(dir.path(), &["bootstrap", "--ci-level", "1.5"], 1, "--ci-level");
    fails(dir.path(), &["bootstrap", "--B", "0"], 1, "--B");
    fails(dir.path(), &["motif", "--edge-threshold", "-1"], 1, "--edge-threshold");
    fails(dir.path(), &["serve", "--listen", "not-an-address"], 1, "--listen");
    fails(dir.path(), &["serve", "--artifact-dir", "."], 1, "--artifact-dir");
    fails(dir.path(), &["frobnicate"], 1, "frobnicate");
}

#[test]
fn inadmissible_mask_is_rejected() {
    let dir = fitted("200");
    let mut mask = read_json(dir.path().join("mask.json"));
    // a self loop
    mask["within"][1][1][1] = json!(1);
    std::fs::write(dir.path().join("bad.json"), mask.to_string()).unwrap();
    fails(dir.path(), &["fit", "--mask", "bad.json"], 1, "violation");
    fails(dir.path(), &["mask", "--check", "bad.json", "--schema", "schema.json"], 1, "violation");
    assert!(!read_json(dir.path().join("mask.report.json"))["violations"].as_array().unwrap().is_empty());
}

#[test]
fn default_mask_matches_synth_mask() {
    let dir = fitted("200");
    ok(dir.path(), &["mask", "--schema", "schema.json", "--out", "m"]);
    assert_eq!(
        read_json(dir.path().join("m/mask.json")),
        read_json(dir.path().join("mask.json"))
    );
}

#[test]
fn degenerate_panel_is_a_runtime_error() {
    let dir = fitted("200");
    let csv = std::fs::read_to_string(dir.path().join("panel.csv")).unwrap();
    let flat: String = csv
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.get(2) == Some(&"BMI") {
                format!("{},{},BMI,1\n", f[0], f[1])
            } else {
                format!("{l}\n")
            }
        })
        .collect();
    std::fs::write(dir.path().join("panel.csv"), flat).unwrap();
    let out = wlingam(dir.path(), &["fit", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn ingest_reports_panel_meta() {
    let dir = fitted("150");
    ok(dir.path(), &["ingest"]);
    let meta = read_json(dir.path().join("panel.meta.json"));
    assert_eq!(meta["n_subjects"], 150);
    assert_eq!(meta["time_points"], 4);
    assert!(dir.path().join("panel.summary.json").exists());
}

#[test]
fn motif_writes_json_and_dot() {
    let dir = fitted("300");
    ok(dir.path(), &["motif", "--edge-threshold", "0.05"]);
    let motif = read_json(dir.path().join("motif.json"));
    assert_eq!(motif["threshold"], 0.05);
    assert!(std::fs::read_to_string(dir.path().join("motif.dot")).unwrap().contains("digraph"));
}

#[test]
fn simulate_builds_a_servable_bundle() {
    let dir = fitted("300");
    let p = dir.path();
    ok(p, &["bootstrap", "--B", "40", "--seed", "3", "--format", "csv"]);
    assert!(p.join("intervals.csv").exists() && p.join("histograms.csv").exists());
    ok(p, &["motif"]);
    ok(p, &["simulate"]);
    let bundle = read_json(p.join("bundle.json"));
    let baseline: serde_json::Map<String, Value> = bundle["variables"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| {
            let b = &v["bounds"];
            let mid = if v["valueType"] == "continuous" {
                (b[0].as_f64().unwrap() + b[1].as_f64().unwrap()) / 2.0
            } else {
                b[0].as_f64().unwrap()
            };
            (v["name"].as_str().unwrap().to_string(), json!(mid))
        })
        .collect();
    let query = json!({
        "baseline": baseline,
        "sourceVariable": "Health-guidance",
        "targetVariable": "BMI",
        "horizon": 0,
        "forwardValue": 1.0,
    });
    std::fs::write(p.join("q.json"), query.to_string()).unwrap();
    let out = wlingam(p, &["simulate", "--query", "q.json", "--out", "s"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let answer: Value = serde_json::from_slice(&out.stdout).unwrap();
    let summary = read_json(p.join("bootstrap.json"));
    let cell = summary["queries"]
        .as_array()
        .unwrap()
        .iter()
        .find(|q| q["source"] == "Health-guidance" && q["target"] == "BMI" && q["lag"] == 0)
        .unwrap();
    if answer["status"] == "Estimate" {
        assert_eq!(answer["value"], cell["point"]);
    } else {
        assert_eq!(cell["includesZero"], true, "{answer}");
    }
    assert!(wlingam_service::load_artifacts(p).is_ok());

    let mut unknown = query.clone();
    unknown["targetVariable"] = json!("Cholesterol");
    std::fs::write(p.join("u.json"), unknown.to_string()).unwrap();
    fails(p, &["simulate", "--query", "u.json", "--out", "s"], 1, "Cholesterol");
}
