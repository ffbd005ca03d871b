//! End-to-end checks of the binary: exit codes and output files.

use std::process::Command;

fn scenario_json(realizations: u32) -> String {
    format!(
        r#"{{
  "schema_version": 1,
  "name": "cli-smoke",
  "volume": {{ "center_m": [0.0, 0.0, 3.5], "length_m": 6.0, "width_m": 6.0, "height_m": 7.0,
               "grid": [2, 2, 2], "resolution": [8, 8, 8] }},
  "anchors": [
    {{ "id": 1, "position_m": [1.5, 1.5, 2.0], "beta": 1.0, "gamma_m": 0.2 }},
    {{ "id": 2, "position_m": [-1.5, 1.0, 5.0], "beta": 1.0, "gamma_m": 0.1 }}
  ],
  "noise": {{ "sigma_range_m": 0.1, "sigma_position_m": 0.01 }},
  "trajectory": {{ "waypoint_count": 6, "speed_mps": 1.0, "samples_per_stage": 40 }},
  "evo": {{ "population_size": 20, "max_generations": 15, "crossover_prob": 0.6,
            "mutation_prob": 0.3, "elitism_prob": 0.1, "rng_seed": 0,
            "stale_generations": 15, "stale_tol": 1e-6 }},
  "rng_seed": 5,
  "realizations": {realizations}
}}"#
    )
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_anchorkit"))
}

#[test]
fn montecarlo_runs_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.json");
    std::fs::write(&scenario, scenario_json(2)).unwrap();
    let out = dir.path().join("results");

    let status = bin()
        .args(["montecarlo", "--scenario"])
        .arg(&scenario)
        .arg("--out")
        .arg(&out)
        .args(["--threads", "2"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("results.json").exists());
    assert!(out.join("results.csv").exists());
}

#[test]
fn simulate_writes_logs() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.json");
    std::fs::write(&scenario, scenario_json(1)).unwrap();
    let out = dir.path().join("sim");

    let status = bin()
        .args(["simulate", "--scenario"])
        .arg(&scenario)
        .arg("--out")
        .arg(&out)
        .args(["--stages", "ls,nls"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("trajectory.csv").exists());
    assert!(out.join("ranges.csv").exists());
    assert!(out.join("results.json").exists());
}

#[test]
fn invalid_scenario_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("bad.json");
    std::fs::write(&scenario, scenario_json(0)).unwrap(); // realizations = 0

    let status = bin().args(["init", "--scenario"]).arg(&scenario).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn inconsistent_stage_override_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.json");
    std::fs::write(&scenario, scenario_json(1)).unwrap();

    let status = bin()
        .args(["init", "--scenario"])
        .arg(&scenario)
        .args(["--stages", "opt_wps"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn plan_writes_waypoints() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.json");
    std::fs::write(&scenario, scenario_json(1)).unwrap();
    let out = dir.path().join("plan");

    let status = bin().args(["plan", "--scenario"]).arg(&scenario).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(out.join("waypoints.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(value["waypoints_m"].as_array().unwrap().len(), 8);
}
