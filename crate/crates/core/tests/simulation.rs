use phcm::sim::{self, read_ledger, run_scenario, Scenario, LEDGER_COLUMNS};
use phcm::PhcmError;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

const RING: &str = r#"{
  "name": "small-ring",
  "representation": "material",
  "grid": { "cells": [16], "length": [1.0], "topology": ["periodic"] },
  "initial": {
    "density": { "type": "constant", "value": 1.0 },
    "velocity": [{ "type": "sine", "amplitude": 0.02, "wavenumber": [1.0] }]
  },
  "model": { "type": "solid", "model": { "kind": "hencky-finite", "kappa": 1.0, "theta": 0.5 } },
  "integrator": "implicit-midpoint",
  "dt": 0.005,
  "steps": 100,
  "output": { "cadence": 10 }
}"#;

fn scenario_in(dir: &Path) -> Scenario {
    let mut s = Scenario::from_json(RING).unwrap();
    s.output.dir = Some(dir.to_path_buf());
    s
}

fn snapshot_steps(dir: &Path) -> BTreeSet<String> {
    std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| n.starts_with("snap_"))
        .map(|n| n[5..11].to_string())
        .collect()
}

#[test]
fn ledger_has_one_row_per_step_and_the_fixed_header() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_scenario(&scenario_in(tmp.path())).unwrap();
    assert_eq!(out.rows.len(), 100);
    let text = std::fs::read_to_string(&out.ledger).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), LEDGER_COLUMNS.join(","));
    assert_eq!(lines.count(), 100);
    let rows = read_ledger(&out.ledger).unwrap();
    assert!((rows.last().unwrap().t - 0.5).abs() < 1e-12);
    assert!(rows.iter().all(|r| r.res_energy.abs() < 1e-8));
}

#[test]
fn snapshots_include_both_ends() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_scenario(&scenario_in(tmp.path())).unwrap();
    assert_eq!(out.snapshot_sets, 11);
    let steps = snapshot_steps(tmp.path());
    assert_eq!(steps.len(), 11);
    assert!(steps.contains("000000") && steps.contains("000100"));
    let snap: PathBuf = std::fs::read_dir(tmp.path()).unwrap().filter_map(|e| e.ok()).map(|e| e.path()).find(|p| p.file_name().unwrap().to_str().unwrap().starts_with("snap_000010")).unwrap();
    let text = std::fs::read_to_string(snap).unwrap();
    assert!(text.starts_with("# field: "));
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(body[0].starts_with("node,"));
    assert_eq!(body.len(), 1 + 16);
}

#[test]
fn zero_cadence_writes_no_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = scenario_in(tmp.path());
    s.output.cadence = 0;
    s.steps = 5;
    assert_eq!(run_scenario(&s).unwrap().snapshot_sets, 0);
    assert!(snapshot_steps(tmp.path()).is_empty());
}

#[test]
fn runs_are_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let la = run_scenario(&scenario_in(a.path())).unwrap().ledger;
    let lb = run_scenario(&scenario_in(b.path())).unwrap().ledger;
    assert_eq!(std::fs::read(la).unwrap(), std::fs::read(lb).unwrap());
}

#[test]
fn missing_field_is_named() {
    let text = RING.replace("\"dt\": 0.005,", "");
    match Scenario::from_json(&text) {
        Err(PhcmError::Config { field, .. }) => assert_eq!(field, "dt"),
        other => panic!("expected a config error, got {other:?}"),
    }
    let text = RING.replace("\"wavenumber\": [1.0]", "\"wavenumber\": [1.0, 2.0]");
    assert!(matches!(Scenario::from_json(&text), Err(PhcmError::Config { .. })));
    let text = RING.replace("\"steps\": 100", "\"stepz\": 100");
    assert!(matches!(Scenario::from_json(&text), Err(PhcmError::Config { .. })));
}

#[test]
fn every_bundled_scenario_parses_and_builds() {
    for (name, _) in sim::BUNDLED {
        let s = sim::bundled(name).unwrap();
        assert_eq!(&s.name, name);
        sim::Simulation::new(s).unwrap();
    }
    assert!(sim::bundled("no-such-scenario").is_err());
}

#[test]
fn tabulated_eos_matches_the_analytic_law() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs");
    let tab = Scenario::from_file(&dir.join("gas1d-tabulated.json")).unwrap();
    let mut ana = sim::bundled("gas1d-acoustic-pulse").unwrap().with_cells(&tab.grid.cells);
    ana.steps = 10;
    let mut tab = tab;
    tab.steps = 10;
    ana.dt = tab.dt;
    let run = |s: Scenario| {
        let tmp = tempfile::tempdir().unwrap();
        let mut s = s;
        s.output = Default::default();
        s.output.dir = Some(tmp.path().to_path_buf());
        run_scenario(&s).unwrap().rows.last().unwrap().e_total
    };
    let (a, b) = (run(ana), run(tab));
    assert!((a - b).abs() < 1e-4 * a, "{a} {b}");
}

#[test]
fn scenarios_conform_to_the_shipped_schema() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(root.join("schema/scenario.schema.json")).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let mut docs: Vec<(String, String)> = sim::BUNDLED.iter().map(|(n, t)| (n.to_string(), t.to_string())).collect();
    docs.push(("tabulated".into(), std::fs::read_to_string(root.join("examples/configs/gas1d-tabulated.json")).unwrap()));
    docs.push(("round trip".into(), serde_json::to_string(&Scenario::from_json(RING).unwrap()).unwrap()));
    for (name, text) in docs {
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        let errors: Vec<String> = validator.iter_errors(&doc).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{name}: {errors:?}");
    }
    let bad: serde_json::Value = serde_json::from_str(&RING.replace("\"dt\": 0.005,", "")).unwrap();
    assert!(!validator.is_valid(&bad));
}
