//! Camera-dropout resilience demo: the same measurement streams are fed to
//! the filter twice, with range fusion enabled and disabled, and the paired
//! position-error series is reported.
//!
//! The pose source models drifting visual odometry: white noise plus a
//! random-walk drift. With ranges enabled the fixed anchors pin the global
//! frame, so the drift is largely rejected and the filter rides out a full
//! camera dropout.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{
    delayed_flush, inject_dropout, AnchorRegistry, CameraTick, FilterState, MeasurementBuffer,
    StatePriors,
};
use crate::geometry::Vec3;
use crate::model::RangeMeasurement;
use crate::sim::trajectory::random_point_inside;
use crate::sim::{Scenario, SeedTree, StreamKind};
use crate::waypoint::{min_snap_trajectory, Trajectory};

/// Paired position error at one camera tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionSample {
    pub t: f64,
    pub error_on_m: f64,
    pub error_off_m: f64,
}

/// One `state_log.csv` row (ranges-on run).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateLogRow {
    pub t: f64,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub trace_p: f64,
    /// `(id, position, beta, gamma)` snapshots of online-refined anchors.
    pub anchors: Vec<(u32, [f64; 3], f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionReport {
    pub schema_version: u32,
    pub scenario_hash: String,
    pub dropout_s: Vec<(f64, f64)>,
    pub series: Vec<FusionSample>,
    pub rmse_on_m: f64,
    pub rmse_off_m: f64,
    /// RMSE over the 10 s window before the first dropout.
    pub pre_dropout_rmse_on_m: Option<f64>,
    /// RMSE over `[end + 5 s, end + 15 s]` after the first dropout.
    pub post_dropout_rmse_on_m: Option<f64>,
    /// RMSE over the final 5 s.
    pub terminal_error_on_m: f64,
    pub terminal_error_off_m: f64,
    pub state_log: Vec<StateLogRow>,
}

/// Paired time series of position errors at the camera ticks.
type ErrorSeries = Vec<(f64, f64)>;

fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

fn windowed_rms(series: &[(f64, f64)], from: f64, to: f64) -> f64 {
    let window: Vec<f64> = series.iter().filter(|(t, _)| *t >= from && *t < to).map(|(_, e)| *e).collect();
    rms(&window)
}

/// A flight path that keeps moving for at least `duration` seconds.
fn demo_path(scenario: &Scenario, tree: &SeedTree, speed: f64, duration: f64) -> Result<Trajectory> {
    let mut rng = tree.rng(0, StreamKind::FusionPath, 0);
    let start = random_point_inside(&scenario.volume, &mut rng);
    let mut waypoints = Vec::new();
    let mut times = Vec::new();
    let mut total = 0.0;
    let mut prev = start;
    while total < duration {
        let wp = random_point_inside(&scenario.volume, &mut rng);
        let t = ((wp - prev).norm() / speed).max(0.5);
        waypoints.push(wp);
        times.push(t);
        total += t;
        prev = wp;
    }
    min_snap_trajectory(&waypoints, &start, &times)
}

/// Runs the paired (ranges on / ranges off) dropout experiment described by
/// `scenario.fusion` over one shared noise realization.
pub fn run_fusion_demo(scenario: &Scenario) -> Result<FusionReport> {
    scenario.validate()?;
    let spec = scenario
        .fusion
        .clone()
        .ok_or_else(|| Error::InvalidScenario("scenario has no fusion section".into()))?;
    let tree = SeedTree::new(scenario.rng_seed);
    let tag_offset = Vec3::from_row_slice(&spec.tag_offset_m);

    let path = demo_path(scenario, &tree, spec.speed_mps, spec.duration_s)?;
    let true_position = |t: f64| path.position(t);

    // Pose stream: truth + random-walk drift + white noise, at camera cadence.
    let mut pose_rng = tree.rng(0, StreamKind::FusionPose, 0);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let camera_dt = 1.0 / spec.camera_rate_hz;
    let tick_count = (spec.duration_s * spec.camera_rate_hz).floor() as usize;
    let mut drift = Vec3::zeros();
    let mut ticks = Vec::with_capacity(tick_count);
    for k in 1..=tick_count {
        let t = k as f64 * camera_dt;
        let step = (spec.pose_drift_psd * camera_dt).sqrt();
        drift += step * Vec3::new(unit.sample(&mut pose_rng), unit.sample(&mut pose_rng), unit.sample(&mut pose_rng));
        let noise = spec.sigma_pose_m
            * Vec3::new(unit.sample(&mut pose_rng), unit.sample(&mut pose_rng), unit.sample(&mut pose_rng));
        ticks.push(CameraTick { time: t, pose: Some(true_position(t) + drift + noise) });
    }
    let ticks = inject_dropout(&spec.dropout_s, &ticks);

    // Range stream: anchors polled round-robin at the total range rate.
    let mut range_rng = tree.rng(0, StreamKind::FusionRanges, 0);
    let range_dt = 1.0 / spec.range_rate_hz;
    let event_count = (spec.duration_s * spec.range_rate_hz).floor() as usize;
    let mut ranges = Vec::with_capacity(event_count);
    for j in 1..=event_count {
        let t = j as f64 * range_dt;
        let anchor = &scenario.anchors[j % scenario.anchors.len()];
        let tag = true_position(t) + tag_offset;
        let clean = anchor.beta * (tag - anchor.position).norm() + anchor.gamma;
        let mut z = clean + spec.sigma_range_m * unit.sample(&mut range_rng);
        while z <= 0.0 {
            z = clean + spec.sigma_range_m * unit.sample(&mut range_rng);
        }
        ranges.push(RangeMeasurement { anchor_id: anchor.id, range: z, timestamp: t, tag_position: tag });
    }

    let registry = AnchorRegistry::all_fixed(scenario.anchors.clone());
    let priors = StatePriors { sigma_velocity: 0.2, ..StatePriors::default() };
    let initial = FilterState::new(
        0.0,
        true_position(0.0) + Vec3::new(0.05, -0.04, 0.03),
        Vec3::zeros(),
        tag_offset,
        &registry,
        &priors,
    );

    let run = |use_ranges: bool| -> Result<(ErrorSeries, Vec<StateLogRow>)> {
        let mut state = initial.clone();
        let mut buffer = MeasurementBuffer::new();
        let mut next_range = 0usize;
        let mut errors = Vec::with_capacity(ticks.len());
        let mut log = Vec::with_capacity(ticks.len());
        for tick in &ticks {
            if use_ranges {
                while next_range < ranges.len() && ranges[next_range].timestamp <= tick.time {
                    buffer.push(ranges[next_range])?;
                    next_range += 1;
                }
            }
            let pose = tick.pose.map(|p| (p, spec.filter_sigma_pose_m));
            let (next, _) =
                delayed_flush(&state, &registry, &mut buffer, tick.time, pose, spec.sigma_range_m, spec.accel_psd)?;
            state = next;
            let error = (state.position - true_position(tick.time)).norm();
            errors.push((tick.time, error));
            log.push(StateLogRow {
                t: tick.time,
                position: [state.position.x, state.position.y, state.position.z],
                velocity: [state.velocity.x, state.velocity.y, state.velocity.z],
                trace_p: state.covariance.trace(),
                anchors: state
                    .anchors
                    .iter()
                    .map(|b| (b.id, [b.position.x, b.position.y, b.position.z], b.beta, b.gamma))
                    .collect(),
            });
        }
        Ok((errors, log))
    };

    let (errors_on, state_log) = run(true)?;
    let (errors_off, _) = run(false)?;

    let series: Vec<FusionSample> = errors_on
        .iter()
        .zip(&errors_off)
        .map(|(&(t, on), &(_, off))| FusionSample { t, error_on_m: on, error_off_m: off })
        .collect();

    let (pre, post) = match spec.dropout_s.first() {
        Some(&(start, end)) => (
            Some(windowed_rms(&errors_on, (start - 10.0).max(0.0), start)),
            Some(windowed_rms(&errors_on, end + 5.0, end + 15.0)),
        ),
        None => (None, None),
    };
    let terminal_from = spec.duration_s - 5.0;

    Ok(FusionReport {
        schema_version: crate::sim::report::SCHEMA_VERSION,
        scenario_hash: scenario.hash(),
        dropout_s: spec.dropout_s.clone(),
        series,
        rmse_on_m: rms(&errors_on.iter().map(|(_, e)| *e).collect::<Vec<_>>()),
        rmse_off_m: rms(&errors_off.iter().map(|(_, e)| *e).collect::<Vec<_>>()),
        pre_dropout_rmse_on_m: pre,
        post_dropout_rmse_on_m: post,
        terminal_error_on_m: windowed_rms(&errors_on, terminal_from, f64::INFINITY),
        terminal_error_off_m: windowed_rms(&errors_off, terminal_from, f64::INFINITY),
        state_log,
    })
}
