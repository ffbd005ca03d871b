//! Scenario files: the experiment description consumed by every subcommand.
//!
//! Scenarios are JSON with units spelled out in the field names (`*_m`,
//! `*_s`, `*_hz`); a committed example lives in `scenarios/`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Anchor, NoiseSpec};
use crate::sim::pipeline::Stage;
use crate::sim::report::SCHEMA_VERSION;
use crate::waypoint::{EvoConfig, FlightVolume};

/// Data-collection flight settings for the initialization stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    /// Random waypoints of the initial survey flight.
    pub waypoint_count: usize,
    pub speed_mps: f64,
    /// Range samples collected per anchor in each pipeline stage.
    pub samples_per_stage: usize,
    /// Half extent of the box (around a random interior point) the short
    /// survey flight stays in. Absent = roam the whole volume.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survey_half_extent_m: Option<f64>,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec { waypoint_count: 10, speed_mps: 1.0, samples_per_stage: 200, survey_half_extent_m: None }
    }
}

/// Settings of the range-fusion (dropout) demonstration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionSpec {
    pub duration_s: f64,
    pub camera_rate_hz: f64,
    /// Total range-event rate; anchors are polled round-robin.
    pub range_rate_hz: f64,
    /// Std of the white noise on generated pose measurements.
    pub sigma_pose_m: f64,
    /// Pose measurement std assumed by the filter (de-weights the drifting
    /// pose source against the ranges).
    pub filter_sigma_pose_m: f64,
    /// Random-walk PSD of the pose drift, per axis (m^2/s).
    pub pose_drift_psd: f64,
    pub sigma_range_m: f64,
    pub accel_psd: f64,
    /// Camera dropout windows, `[start, end]` seconds.
    #[serde(default)]
    pub dropout_s: Vec<(f64, f64)>,
    /// Body-frame tag offset used in the demo.
    pub tag_offset_m: [f64; 3],
    /// Waypoints of the demo flight path.
    pub waypoint_count: usize,
    pub speed_mps: f64,
}

impl Default for FusionSpec {
    fn default() -> Self {
        FusionSpec {
            duration_s: 120.0,
            camera_rate_hz: 10.0,
            range_rate_hz: 40.0,
            sigma_pose_m: 0.05,
            filter_sigma_pose_m: 0.3,
            pose_drift_psd: 2e-3,
            sigma_range_m: 0.1,
            accel_psd: 0.5,
            dropout_s: vec![(60.0, 70.0)],
            tag_offset_m: [0.1, 0.0, 0.05],
            waypoint_count: 8,
            speed_mps: 1.0,
        }
    }
}

fn default_stages() -> Vec<Stage> {
    vec![Stage::Ls, Stage::Nls, Stage::RndWps, Stage::OptWps]
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub volume: FlightVolume,
    /// Ground-truth anchors (position, beta, gamma).
    pub anchors: Vec<Anchor>,
    pub noise: NoiseSpec,
    #[serde(default)]
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub evo: EvoConfig,
    #[serde(default = "default_stages")]
    pub stages: Vec<Stage>,
    pub rng_seed: u64,
    pub realizations: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion: Option<FusionSpec>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text)
            .map_err(|e| Error::InvalidScenario(e.to_string()))?;
        if scenario.schema_version > SCHEMA_VERSION {
            return Err(Error::UnsupportedSchema { got: scenario.schema_version, supported: SCHEMA_VERSION });
        }
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.volume.validate()?;
        if self.anchors.is_empty() {
            return Err(Error::InvalidScenario("need at least one anchor".into()));
        }
        for a in &self.anchors {
            if a.beta <= 0.0 || a.beta.is_nan() {
                return Err(Error::InvalidScenario(format!("anchor {}: beta must be > 0", a.id)));
            }
            if !a.position.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidScenario(format!("anchor {}: non-finite position", a.id)));
            }
            if self.anchors.iter().filter(|b| b.id == a.id).count() > 1 {
                return Err(Error::InvalidScenario(format!("duplicate anchor id {}", a.id)));
            }
        }
        if self.noise.sigma_range < 0.0 || self.noise.sigma_position < 0.0 {
            return Err(Error::InvalidScenario("noise sigmas must be >= 0".into()));
        }
        if self.realizations == 0 {
            return Err(Error::InvalidScenario("realizations must be >= 1".into()));
        }
        if self.trajectory.samples_per_stage < 5 {
            return Err(Error::InvalidScenario("samples_per_stage must be >= 5".into()));
        }
        if self.trajectory.speed_mps <= 0.0 || self.trajectory.speed_mps.is_nan() {
            return Err(Error::InvalidScenario("speed_mps must be > 0".into()));
        }
        if self.stages.is_empty() {
            return Err(Error::InvalidScenario("stage list is empty".into()));
        }
        // Stage dependencies: NLS refines the LS output; both waypoint
        // refinements start from the NLS estimate.
        let has = |s: Stage| self.stages.contains(&s);
        if has(Stage::Nls) && !has(Stage::Ls) {
            return Err(Error::InvalidScenario("nls requires ls".into()));
        }
        if (has(Stage::RndWps) || has(Stage::OptWps)) && !has(Stage::Nls) {
            return Err(Error::InvalidScenario("waypoint stages require nls".into()));
        }
        if let Some(fusion) = &self.fusion {
            if self.anchors.len() < 2 {
                return Err(Error::InvalidScenario("fusion demo needs >= 2 anchors".into()));
            }
            let rates = [fusion.duration_s, fusion.camera_rate_hz, fusion.range_rate_hz];
            if rates.iter().any(|r| *r <= 0.0 || r.is_nan()) {
                return Err(Error::InvalidScenario("fusion rates and duration must be > 0".into()));
            }
            for &(a, b) in &fusion.dropout_s {
                if a >= b || a < 0.0 || b > fusion.duration_s || a.is_nan() {
                    return Err(Error::InvalidScenario(format!("bad dropout window ({a}, {b})")));
                }
            }
        }
        Ok(())
    }

    /// Content hash tying reports to the exact scenario that produced them.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("scenario serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
