//! Machine-readable experiment outputs: versioned JSON reports plus flat CSV
//! for plotting. Output is byte-stable for a fixed scenario and seed, except
//! for the wall-clock `timing` block.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::Anchor;
use crate::sim::fusion::FusionReport;
use crate::sim::pipeline::RunReport;
use crate::waypoint::OptimizedWaypoints;

/// Version written into every report and scenario; readers reject anything
/// newer.
pub const SCHEMA_VERSION: u32 = 1;

/// Column contract of `results.csv`.
pub const RESULTS_CSV_HEADER: &str =
    "realization,anchor_id,stage,position_error_m,beta_error,gamma_error_m,samples";

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    file.write_all(contents.as_bytes())
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Writes `results.json` and `results.csv` under `dir`; returns their paths.
pub fn write_report(report: &RunReport, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;

    let json_path = dir.join("results.json");
    let json = serde_json::to_string_pretty(report)
        .map_err(|source| Error::Json { path: json_path.clone(), source })?;
    write_file(&json_path, &json)?;

    let csv_path = dir.join("results.csv");
    let mut csv = String::from(RESULTS_CSV_HEADER);
    csv.push('\n');
    for realization in &report.realizations {
        for row in &realization.results {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                realization.index,
                row.anchor_id,
                row.stage.as_str(),
                row.position_error_m,
                row.beta_error,
                row.gamma_error_m,
                row.samples
            ));
        }
    }
    write_file(&csv_path, &csv)?;
    Ok((json_path, csv_path))
}

/// Reads back a `results.json`, rejecting reports from a newer schema.
pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    // Peek at the version before committing to the full structure.
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    let got = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if got > SCHEMA_VERSION {
        return Err(Error::UnsupportedSchema { got, supported: SCHEMA_VERSION });
    }
    serde_json::from_value(value).map_err(|source| Error::Json { path: path.to_path_buf(), source })
}

/// Writes `fusion_report.json`, the paired error series `rmse.csv`, and the
/// filter log `state_log.csv`.
pub fn write_fusion_report(report: &FusionReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;

    let json_path = dir.join("fusion_report.json");
    let json = serde_json::to_string_pretty(report)
        .map_err(|source| Error::Json { path: json_path.clone(), source })?;
    write_file(&json_path, &json)?;

    let mut csv = String::from("t_s,error_on_m,error_off_m\n");
    for s in &report.series {
        csv.push_str(&format!("{},{},{}\n", s.t, s.error_on_m, s.error_off_m));
    }
    write_file(&dir.join("rmse.csv"), &csv)?;

    // state_log.csv carries the ranges-on filter trajectory; per-anchor
    // estimate columns appear only when anchors were refined online.
    let mut header = String::from("t,px,py,pz,vx,vy,vz,trace_p");
    if let Some(first) = report.state_log.first() {
        for block in &first.anchors {
            for suffix in ["x", "y", "z", "beta", "gamma"] {
                header.push_str(&format!(",a{}_{suffix}", block.0));
            }
        }
    }
    header.push('\n');
    let mut csv = header;
    for row in &report.state_log {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}",
            row.t,
            row.position[0],
            row.position[1],
            row.position[2],
            row.velocity[0],
            row.velocity[1],
            row.velocity[2],
            row.trace_p
        ));
        for (_, pos, beta, gamma) in &row.anchors {
            csv.push_str(&format!(",{},{},{},{},{}", pos[0], pos[1], pos[2], beta, gamma));
        }
        csv.push('\n');
    }
    write_file(&dir.join("state_log.csv"), &csv)
}

/// Writes `waypoints.json`: the planned set, its cost, and the anchor
/// estimates the plan was computed from.
pub fn write_waypoints(plan: &OptimizedWaypoints, anchors: &[Anchor], dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    let path = dir.join("waypoints.json");
    let value = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "cost": plan.cost,
        "generations": plan.generations,
        "waypoints_m": plan.waypoints.points.iter().map(|p| [p.x, p.y, p.z]).collect::<Vec<_>>(),
        "anchor_estimates": anchors,
    });
    let json = serde_json::to_string_pretty(&value).map_err(|source| Error::Json { path: path.clone(), source })?;
    write_file(&path, &json)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::pipeline::{RealizationResult, Stage, StageResult, Timing};

    fn tiny_report() -> RunReport {
        RunReport {
            schema_version: SCHEMA_VERSION,
            scenario_hash: "abc".into(),
            rng_seed: 1,
            realizations: vec![RealizationResult {
                index: 0,
                results: vec![StageResult {
                    stage: Stage::Ls,
                    anchor_id: 3,
                    position_error_m: 0.25,
                    beta_error: 0.02,
                    gamma_error_m: 0.01,
                    samples: 200,
                }],
                failures: vec![],
            }],
            aggregates: vec![],
            timing: Timing::default(),
        }
    }

    #[test]
    fn report_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let report = tiny_report();
        let (json_path, csv_path) = write_report(&report, dir.path()).unwrap();
        let back = read_report(&json_path).unwrap();
        assert_eq!(report, back);

        let csv = std::fs::read_to_string(csv_path).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), RESULTS_CSV_HEADER);
        let row = lines.next().unwrap();
        assert_eq!(row.split(',').count(), RESULTS_CSV_HEADER.split(',').count());
        assert!(row.starts_with("0,3,ls,"));
    }

    #[test]
    fn future_schema_versions_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut report = tiny_report();
        report.schema_version = SCHEMA_VERSION + 5;
        let (json_path, _) = write_report(&report, dir.path()).unwrap();
        assert!(matches!(read_report(&json_path), Err(Error::UnsupportedSchema { .. })));
    }
}
