//! The staged initialization experiment: coarse LS, nonlinear refinement,
//! then waypoint-based refinement on fresh data with random and GDOP-optimal
//! waypoints, compared per realization at equal sample counts.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coarse::solve_coarse;
use crate::error::Result;
use crate::geometry::Vec3;
use crate::model::{Anchor, RangeMeasurement};
use crate::refine::{refine, AnchorParams, LmConfig};
use crate::sim::trajectory::{generate_random_trajectory, random_point_inside, simulate_anchor_ranges};
use crate::sim::{Scenario, SeedTree, StreamKind};
use crate::waypoint::{optimize_waypoints, order_nearest_neighbor};

/// One initialization method in the comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Coarse linear solution (optimal double method).
    Ls,
    /// Nonlinear refinement on the same survey data.
    Nls,
    /// Refinement on new data collected at random waypoints.
    RndWps,
    /// Refinement on new data collected at GDOP-optimal waypoints.
    OptWps,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Ls => "ls",
            Stage::Nls => "nls",
            Stage::RndWps => "rnd_wps",
            Stage::OptWps => "opt_wps",
        }
    }
}

/// Per-anchor error of one stage in one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub stage: Stage,
    pub anchor_id: u32,
    pub position_error_m: f64,
    pub beta_error: f64,
    pub gamma_error_m: f64,
    pub samples: usize,
}

/// A stage that could not produce an estimate for an anchor (or at all).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: Stage,
    pub anchor_id: Option<u32>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationResult {
    pub index: u32,
    pub results: Vec<StageResult>,
    pub failures: Vec<StageFailure>,
}

/// Aggregate over realizations: anchor-mean position error per realization,
/// then mean/std across realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageAggregate {
    pub stage: Stage,
    pub mean_position_error_m: f64,
    pub std_position_error_m: f64,
    pub mean_gamma_error_m: f64,
    /// Realizations that produced at least one estimate for this stage.
    pub realizations: u32,
}

/// Wall-clock bookkeeping; excluded from determinism comparisons.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_s: f64,
    pub per_stage_s: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub scenario_hash: String,
    pub rng_seed: u64,
    pub realizations: Vec<RealizationResult>,
    pub aggregates: Vec<StageAggregate>,
    pub timing: Timing,
}

/// Dwell positions for waypoint-based collection: `total` samples split as
/// evenly as possible across the waypoints, at a 10 Hz dwell cadence.
fn waypoint_dwell_trajectory(waypoints: &[Vec3], total: usize) -> Vec<(f64, Vec3)> {
    let n = waypoints.len().max(1);
    let base = total / n;
    let remainder = total % n;
    let mut out = Vec::with_capacity(total);
    let mut t = 0.0;
    for (j, wp) in waypoints.iter().enumerate() {
        let count = base + usize::from(j < remainder);
        for _ in 0..count {
            out.push((t, *wp));
            t += 0.1;
        }
    }
    out
}

struct StageClock {
    durations: BTreeMap<String, f64>,
}

impl StageClock {
    fn new() -> Self {
        StageClock { durations: BTreeMap::new() }
    }

    fn measure<T>(&mut self, stage: Stage, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.durations.entry(stage.as_str().to_string()).or_insert(0.0) += start.elapsed().as_secs_f64();
        out
    }
}

/// Runs every enabled stage of one realization; failures are recorded, not
/// propagated, so other anchors and stages keep going.
pub fn run_realization(scenario: &Scenario, tree: &SeedTree, index: u32) -> RealizationResult {
    let (result, _) = run_realization_timed(scenario, tree, index);
    result
}

fn run_realization_timed(
    scenario: &Scenario,
    tree: &SeedTree,
    index: u32,
) -> (RealizationResult, BTreeMap<String, f64>) {
    let mut results = Vec::new();
    let mut failures = Vec::new();
    let mut clock = StageClock::new();
    let lm = LmConfig::default();
    let noise = scenario.noise;
    let has = |s: Stage| scenario.stages.contains(&s);

    let survey = match generate_random_trajectory(
        &scenario.volume,
        &scenario.trajectory,
        &mut tree.rng(index, StreamKind::InitTrajectory, 0),
    ) {
        Ok(t) => t,
        Err(e) => {
            for &stage in &scenario.stages {
                failures.push(StageFailure { stage, anchor_id: None, message: e.to_string() });
            }
            return (RealizationResult { index, results, failures }, clock.durations);
        }
    };
    let tag_start = survey.last().map(|(_, p)| *p).unwrap_or(scenario.volume.center);

    let survey_ranges: Vec<Vec<RangeMeasurement>> = scenario
        .anchors
        .iter()
        .enumerate()
        .map(|(i, a)| {
            simulate_anchor_ranges(&survey, a, &noise, &mut tree.rng(index, StreamKind::InitRanges, i as u32))
        })
        .collect();

    // Coarse linear stage.
    let mut coarse = BTreeMap::new();
    if has(Stage::Ls) {
        clock.measure(Stage::Ls, || {
            for (anchor, samples) in scenario.anchors.iter().zip(&survey_ranges) {
                match solve_coarse(samples, &noise) {
                    Ok(solution) => {
                        results.push(StageResult {
                            stage: Stage::Ls,
                            anchor_id: anchor.id,
                            position_error_m: (solution.anchor_position - anchor.position).norm(),
                            beta_error: (1.0 - anchor.beta).abs(),
                            gamma_error_m: (solution.gamma - anchor.gamma).abs(),
                            samples: samples.len(),
                        });
                        coarse.insert(anchor.id, solution);
                    }
                    Err(e) => failures.push(StageFailure {
                        stage: Stage::Ls,
                        anchor_id: Some(anchor.id),
                        message: e.to_string(),
                    }),
                }
            }
        });
    }

    // Nonlinear refinement on the same survey data.
    let mut nls = BTreeMap::new();
    if has(Stage::Nls) {
        clock.measure(Stage::Nls, || {
            for (anchor, samples) in scenario.anchors.iter().zip(&survey_ranges) {
                let Some(start) = coarse.get(&anchor.id) else { continue };
                match refine(&AnchorParams::from_coarse(start), samples, &lm) {
                    Ok(solution) => {
                        results.push(stage_result(Stage::Nls, anchor, &solution.params, samples.len()));
                        nls.insert(anchor.id, solution.params);
                    }
                    Err(e) => failures.push(StageFailure {
                        stage: Stage::Nls,
                        anchor_id: Some(anchor.id),
                        message: e.to_string(),
                    }),
                }
            }
        });
    }

    // Waypoint stages: fresh data, same per-anchor sample budget.
    let run_waypoint_stage = |stage: Stage,
                                  waypoints: Vec<Vec3>,
                                  ranges_kind: StreamKind,
                                  results: &mut Vec<StageResult>,
                                  failures: &mut Vec<StageFailure>| {
        let dwell = waypoint_dwell_trajectory(&waypoints, scenario.trajectory.samples_per_stage);
        for (i, anchor) in scenario.anchors.iter().enumerate() {
            let Some(start) = nls.get(&anchor.id) else { continue };
            let samples =
                simulate_anchor_ranges(&dwell, anchor, &noise, &mut tree.rng(index, ranges_kind, i as u32));
            match refine(start, &samples, &lm) {
                Ok(solution) => results.push(stage_result(stage, anchor, &solution.params, samples.len())),
                Err(e) => failures.push(StageFailure {
                    stage,
                    anchor_id: Some(anchor.id),
                    message: e.to_string(),
                }),
            }
        }
    };

    if has(Stage::RndWps) {
        clock.measure(Stage::RndWps, || {
            let mut rng = tree.rng(index, StreamKind::RndWaypoints, 0);
            let n_p = scenario.volume.subcube_count();
            let points: Vec<Vec3> = (0..n_p).map(|_| random_point_inside(&scenario.volume, &mut rng)).collect();
            let ordered = order_nearest_neighbor(&tag_start, &points);
            run_waypoint_stage(Stage::RndWps, ordered, StreamKind::RndWpsRanges, &mut results, &mut failures);
        });
    }

    if has(Stage::OptWps) {
        clock.measure(Stage::OptWps, || {
            let estimates: Vec<Vec3> = nls.values().map(|p| p.position).collect();
            if estimates.is_empty() {
                failures.push(StageFailure {
                    stage: Stage::OptWps,
                    anchor_id: None,
                    message: "no nonlinear estimates available for planning".into(),
                });
                return;
            }
            let mut evo = scenario.evo;
            evo.rng_seed = tree.seed(index, StreamKind::Evolution, 0);
            match optimize_waypoints(&scenario.volume, &estimates, &tag_start, &evo) {
                Ok(plan) => run_waypoint_stage(
                    Stage::OptWps,
                    plan.waypoints.points,
                    StreamKind::OptWpsRanges,
                    &mut results,
                    &mut failures,
                ),
                Err(e) => failures.push(StageFailure {
                    stage: Stage::OptWps,
                    anchor_id: None,
                    message: e.to_string(),
                }),
            }
        });
    }

    (RealizationResult { index, results, failures }, clock.durations)
}

fn stage_result(stage: Stage, anchor: &Anchor, estimate: &AnchorParams, samples: usize) -> StageResult {
    StageResult {
        stage,
        anchor_id: anchor.id,
        position_error_m: (estimate.position - anchor.position).norm(),
        beta_error: (estimate.beta - anchor.beta).abs(),
        gamma_error_m: (estimate.gamma - anchor.gamma).abs(),
        samples,
    }
}

/// Anchor-mean position error of one stage in one realization.
fn realization_stage_mean(realization: &RealizationResult, stage: Stage) -> Option<(f64, f64)> {
    let rows: Vec<&StageResult> = realization.results.iter().filter(|r| r.stage == stage).collect();
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    Some((
        rows.iter().map(|r| r.position_error_m).sum::<f64>() / n,
        rows.iter().map(|r| r.gamma_error_m).sum::<f64>() / n,
    ))
}

fn aggregate(stages: &[Stage], realizations: &[RealizationResult]) -> Vec<StageAggregate> {
    stages
        .iter()
        .map(|&stage| {
            let per_realization: Vec<(f64, f64)> =
                realizations.iter().filter_map(|r| realization_stage_mean(r, stage)).collect();
            let n = per_realization.len();
            let (mean, std, gamma_mean) = if n == 0 {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                let mean = per_realization.iter().map(|(p, _)| p).sum::<f64>() / n as f64;
                let gamma_mean = per_realization.iter().map(|(_, g)| g).sum::<f64>() / n as f64;
                let var = if n > 1 {
                    per_realization.iter().map(|(p, _)| (p - mean).powi(2)).sum::<f64>() / (n - 1) as f64
                } else {
                    0.0
                };
                (mean, var.sqrt(), gamma_mean)
            };
            StageAggregate {
                stage,
                mean_position_error_m: mean,
                std_position_error_m: std,
                mean_gamma_error_m: gamma_mean,
                realizations: n as u32,
            }
        })
        .collect()
}

/// Runs the whole Monte-Carlo comparison. Realizations execute in parallel on
/// the global rayon pool; all randomness is pre-split by realization index,
/// so the report is identical regardless of thread count.
pub fn run_pipeline(scenario: &Scenario) -> Result<RunReport> {
    scenario.validate()?;
    let started = Instant::now();
    let tree = SeedTree::new(scenario.rng_seed);

    let outcomes: Vec<(RealizationResult, BTreeMap<String, f64>)> = (0..scenario.realizations)
        .into_par_iter()
        .map(|r| run_realization_timed(scenario, &tree, r))
        .collect();

    let mut per_stage_s = BTreeMap::new();
    let mut realizations = Vec::with_capacity(outcomes.len());
    for (result, durations) in outcomes {
        for (k, v) in durations {
            *per_stage_s.entry(k).or_insert(0.0) += v;
        }
        realizations.push(result);
    }

    let mut stages = scenario.stages.clone();
    stages.sort();
    stages.dedup();
    let aggregates = aggregate(&stages, &realizations);

    Ok(RunReport {
        schema_version: crate::sim::report::SCHEMA_VERSION,
        scenario_hash: scenario.hash(),
        rng_seed: scenario.rng_seed,
        realizations,
        aggregates,
        timing: Timing { total_s: started.elapsed().as_secs_f64(), per_stage_s },
    })
}
