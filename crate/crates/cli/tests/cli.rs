use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sqhhg_cli::CliConfig;

/// Coarser time step for plumbing tests; physics is checked elsewhere.
const FAST: [&str; 2] = ["--set", "run.grid.dt=0.1"];

fn sqhhg(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqhhg"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn guide_defaults_match_effective_config() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../book/src/configuration.md")).unwrap();
    let block = text.split("```json\n").nth(1).and_then(|s| s.split("```").next()).expect("json block");
    let documented: Value = serde_json::from_str(block).unwrap();
    assert_eq!(documented, serde_json::to_value(CliConfig::default()).unwrap());

    let dir = tempfile::tempdir().unwrap();
    let out = sqhhg(&["analytics"], dir.path());
    assert!(out.status.success());
    assert_eq!(read_json(&dir.path().join("config.json")), documented);
}

#[test]
fn unknown_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = sqhhg(&["run", "--set", "run.squeeze.q=1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("run.squeeze.q"), "{err}");
    assert!(!dir.path().join("shots.csv").exists());
}

#[test]
fn ill_typed_file_value_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"run": {"n_shot": "many"}}"#).unwrap();
    let out = sqhhg(&["run", "--config", cfg.to_str().unwrap()], &dir.path().join("o"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.n_shot"));
}

#[test]
fn invalid_values_and_usage_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sqhhg(&["run", "--set", "run.squeeze.r=-1"], dir.path()).status.code(), Some(2));
    assert_eq!(sqhhg(&["run", "--set", "run.n_shot=0"], dir.path()).status.code(), Some(2));
    assert_eq!(sqhhg(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(sqhhg(&["run", "--set", "no_equals_sign"], dir.path()).status.code(), Some(2));
}

#[test]
fn analytics_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = sqhhg(&["analytics", "--set", "analytics.trajectory_points=500"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let yields = std::fs::read_to_string(dir.path().join("yield_vs_r.csv")).unwrap();
    assert_eq!(yields.lines().count(), 32);
    assert!(yields.starts_with("r,as_numeric,as_analytic,ps_numeric,ps_analytic"));
    assert!(dir.path().join("cutoff_vs_r.csv").exists());
    assert_eq!(std::fs::read_to_string(dir.path().join("three_step.csv")).unwrap().lines().count(), 501);
}

#[test]
fn tagged_table_switch_replaces_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = sqhhg(&["analytics", "--set", r#"run.mode_volume={"mode":"explicit_amplitude","e_vac_au":0.0005}"#], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = read_json(&dir.path().join("config.json"));
    assert_eq!(cfg["run"]["mode_volume"], serde_json::json!({"mode": "explicit_amplitude", "e_vac_au": 0.0005}));
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["run", "--seed", "5", "--set", "run.n_shot=3", "--set", "run.store_spectra=true"];
    args.extend(FAST);
    let out = sqhhg(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let shots = std::fs::read_to_string(dir.path().join("shots.csv")).unwrap();
    let lines: Vec<&str> = shots.lines().collect();
    assert_eq!(lines[0], "shot_index,x,p,h_au,h_ev,h_ho,plateau_log10,flags,norm_loss");
    assert_eq!(lines.len(), 4);
    assert!(lines[1..].iter().all(|l| l.split(',').nth(7) == Some("")));

    let stats = read_json(&dir.path().join("stats.json"));
    assert_eq!(stats["n_shot"], 3);
    assert!(stats["mean_h_ho"].as_f64().unwrap() > 80.0);
    // too few shots for a variance
    assert!(stats["var_h_ev2"].is_null());

    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["schema_version"], 1);
    assert_eq!(manifest["master_seed"], 5);
    assert!(dir.path().join("mean_spectrum.csv").exists());
    assert_eq!(read_json(&dir.path().join("config.json"))["run"]["master_seed"], 5);
}

#[test]
fn flagged_ensemble_exits_3_after_writing() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["run", "--set", "run.n_shot=2", "--set", "run.protocol.plateau_window=[0.5,0.501]"];
    args.extend(FAST);
    let out = sqhhg(&args, dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let shots = std::fs::read_to_string(dir.path().join("shots.csv")).unwrap();
    assert!(shots.lines().skip(1).all(|l| l.contains("no_plateau")));
}

#[test]
fn sweep_writes_table_and_fit() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "sweep",
        "--set",
        "run.n_shot=12",
        "--set",
        "sweep.values=[0.5,1.0,1.5,2.0]",
        "--set",
        "run.driver_kind=squeezed",
    ];
    args.extend(FAST);
    let out = sqhhg(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert!(table.lines().skip(1).all(|l| l.starts_with("r,")));
    assert_eq!(read_json(&dir.path().join("sql_stats.json"))["n_shot"], 12);
    assert!(read_json(&dir.path().join("twochannel.json"))["c_x_ev2"].as_f64().unwrap() >= 0.0);
}

#[test]
fn calibrate_reports_ladder() {
    let dir = tempfile::tempdir().unwrap();
    let out = sqhhg(&["calibrate", "--set", "run.grid.dt=0.1"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cal = read_json(&dir.path().join("calibration.json"));
    assert!((cal["ip_achieved_ev"].as_f64().unwrap() - 15.76).abs() < 0.05);
    let ladder = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(ladder.lines().count(), 5);
}
