//! Range-aided navigation filter with delayed range updates.
//!
//! The state is a reduced vehicle model — position, velocity, body tag
//! offset — optionally augmented with per-anchor `(position, beta, gamma)`
//! blocks for anchors being refined online. Orientation is not estimated;
//! the body frame is taken as globally aligned, so the tag sits at
//! `position + tag_offset`.
//!
//! Range measurements arriving between two pose updates are buffered and
//! replayed at the next pose time as a chain of propagate/update steps
//! (the *delayed update*), instead of being interpolated.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::model::{Anchor, RangeMeasurement, MIN_RANGE_DISTANCE};

/// Vehicle block: position, velocity, tag offset.
const BASE_DIM: usize = 9;
/// Per refined anchor: position + beta + gamma.
const ANCHOR_DIM: usize = 5;

/// How an anchor participates in the filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorMode {
    /// Parameters frozen at their registry values; pins the global frame.
    Fixed,
    /// Parameters carried (and updated) in the filter state.
    OnlineRefined,
}

/// The anchors known to the filter and their participation mode.
#[derive(Debug, Clone)]
pub struct AnchorRegistry {
    entries: Vec<(Anchor, AnchorMode)>,
}

impl AnchorRegistry {
    /// Validates that refining any anchor online leaves at least two fixed
    /// anchors to pin the global frame.
    pub fn new(entries: Vec<(Anchor, AnchorMode)>) -> Result<Self> {
        let fixed = entries.iter().filter(|(_, m)| *m == AnchorMode::Fixed).count();
        let refined = entries.len() - fixed;
        if refined > 0 && fixed < 2 {
            return Err(Error::InvalidConfig(format!(
                "online refinement needs >= 2 fixed anchors, have {fixed}"
            )));
        }
        for (i, (a, _)) in entries.iter().enumerate() {
            if entries.iter().skip(i + 1).any(|(b, _)| b.id == a.id) {
                return Err(Error::InvalidConfig(format!("duplicate anchor id {}", a.id)));
            }
        }
        Ok(AnchorRegistry { entries })
    }

    pub fn all_fixed(anchors: Vec<Anchor>) -> Self {
        AnchorRegistry { entries: anchors.into_iter().map(|a| (a, AnchorMode::Fixed)).collect() }
    }

    pub fn get(&self, id: u32) -> Option<(&Anchor, AnchorMode)> {
        self.entries.iter().find(|(a, _)| a.id == id).map(|(a, m)| (a, *m))
    }

    /// Refined anchors in insertion order; this is the state-block order.
    pub fn refined(&self) -> impl Iterator<Item = &Anchor> {
        self.entries.iter().filter(|(_, m)| *m == AnchorMode::OnlineRefined).map(|(a, _)| a)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Anchor, AnchorMode)> {
        self.entries.iter()
    }
}

/// State block for one online-refined anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorBlock {
    pub id: u32,
    pub position: Vec3,
    pub beta: f64,
    pub gamma: f64,
}

/// Prior standard deviations for a fresh filter state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatePriors {
    pub sigma_position: f64,
    pub sigma_velocity: f64,
    pub sigma_tag_offset: f64,
    pub sigma_anchor_position: f64,
    pub sigma_beta: f64,
    pub sigma_gamma: f64,
}

impl Default for StatePriors {
    fn default() -> Self {
        StatePriors {
            sigma_position: 0.1,
            sigma_velocity: 0.1,
            sigma_tag_offset: 1e-3,
            sigma_anchor_position: 0.3,
            sigma_beta: 0.05,
            sigma_gamma: 0.1,
        }
    }
}

/// Filter mean and joint covariance at `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub time: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub tag_offset: Vec3,
    /// Online-refined anchor blocks, in registry order.
    pub anchors: Vec<AnchorBlock>,
    /// Joint covariance, `9 + 5 * anchors.len()` square.
    pub covariance: DMatrix<f64>,
}

impl FilterState {
    /// Fresh state; refined anchor blocks are seeded from the registry
    /// entries marked [`AnchorMode::OnlineRefined`].
    pub fn new(
        time: f64,
        position: Vec3,
        velocity: Vec3,
        tag_offset: Vec3,
        registry: &AnchorRegistry,
        priors: &StatePriors,
    ) -> Self {
        let anchors: Vec<AnchorBlock> = registry
            .refined()
            .map(|a| AnchorBlock { id: a.id, position: a.position, beta: a.beta, gamma: a.gamma })
            .collect();
        let dim = BASE_DIM + ANCHOR_DIM * anchors.len();
        let mut cov = DMatrix::zeros(dim, dim);
        for i in 0..3 {
            cov[(i, i)] = priors.sigma_position.powi(2);
            cov[(3 + i, 3 + i)] = priors.sigma_velocity.powi(2);
            cov[(6 + i, 6 + i)] = priors.sigma_tag_offset.powi(2);
        }
        for slot in 0..anchors.len() {
            let base = BASE_DIM + ANCHOR_DIM * slot;
            for i in 0..3 {
                cov[(base + i, base + i)] = priors.sigma_anchor_position.powi(2);
            }
            cov[(base + 3, base + 3)] = priors.sigma_beta.powi(2);
            cov[(base + 4, base + 4)] = priors.sigma_gamma.powi(2);
        }
        FilterState { time, position, velocity, tag_offset, anchors, covariance: cov }
    }

    pub fn dim(&self) -> usize {
        BASE_DIM + ANCHOR_DIM * self.anchors.len()
    }

    fn anchor_slot(&self, id: u32) -> Option<usize> {
        self.anchors.iter().position(|b| b.id == id)
    }

    fn apply_correction(&mut self, dx: &DVector<f64>) {
        for i in 0..3 {
            self.position[i] += dx[i];
            self.velocity[i] += dx[3 + i];
            self.tag_offset[i] += dx[6 + i];
        }
        for (slot, block) in self.anchors.iter_mut().enumerate() {
            let base = BASE_DIM + ANCHOR_DIM * slot;
            for i in 0..3 {
                block.position[i] += dx[base + i];
            }
            block.beta += dx[base + 3];
            block.gamma += dx[base + 4];
        }
    }

    fn symmetrize(&mut self) {
        let sym = 0.5 * (&self.covariance + self.covariance.transpose());
        self.covariance = sym;
    }

    /// Effective parameters of `id`: the state block if refined, otherwise
    /// the registry values.
    fn anchor_params(&self, registry: &AnchorRegistry, id: u32) -> Result<(Vec3, f64, f64, Option<usize>)> {
        let (anchor, mode) = registry.get(id).ok_or(Error::UnknownAnchor(id))?;
        Ok(match mode {
            AnchorMode::Fixed => (anchor.position, anchor.beta, anchor.gamma, None),
            AnchorMode::OnlineRefined => {
                let slot = self.anchor_slot(id).ok_or(Error::UnknownAnchor(id))?;
                let b = &self.anchors[slot];
                (b.position, b.beta, b.gamma, Some(slot))
            }
        })
    }
}

/// Constant-velocity propagation over `dt` seconds with white-acceleration
/// noise of power spectral density `accel_psd` (m^2/s^3). `dt = 0` is the
/// identity.
pub fn propagate(state: &FilterState, dt: f64, accel_psd: f64) -> FilterState {
    let mut next = state.clone();
    next.time += dt;
    next.position += state.velocity * dt;

    let dim = state.dim();
    let mut f = DMatrix::identity(dim, dim);
    for i in 0..3 {
        f[(i, 3 + i)] = dt;
    }
    let mut q = DMatrix::zeros(dim, dim);
    for i in 0..3 {
        q[(i, i)] = accel_psd * dt.powi(3) / 3.0;
        q[(i, 3 + i)] = accel_psd * dt.powi(2) / 2.0;
        q[(3 + i, i)] = accel_psd * dt.powi(2) / 2.0;
        q[(3 + i, 3 + i)] = accel_psd * dt;
    }
    next.covariance = &f * &state.covariance * f.transpose() + q;
    next.symmetrize();
    next
}

/// Measurement row and prediction for one range at the current mean.
fn range_row(state: &FilterState, registry: &AnchorRegistry, z: &RangeMeasurement) -> Result<(DVector<f64>, f64)> {
    let (a_pos, beta, gamma, slot) = state.anchor_params(registry, z.anchor_id)?;
    let tag = state.position + state.tag_offset;
    let diff = tag - a_pos;
    let d = diff.norm();
    if d <= MIN_RANGE_DISTANCE {
        return Err(Error::DegenerateGeometry { distance: d, min: MIN_RANGE_DISTANCE });
    }
    let predicted = beta * d + gamma;
    let gamma_row = (beta / d) * diff;

    let mut h = DVector::zeros(state.dim());
    for i in 0..3 {
        h[i] = gamma_row[i]; // d h / d position
        h[6 + i] = gamma_row[i]; // d h / d tag offset (identity body frame)
    }
    if let Some(slot) = slot {
        let base = BASE_DIM + ANCHOR_DIM * slot;
        for i in 0..3 {
            h[base + i] = -gamma_row[i];
        }
        h[base + 3] = d; // d h / d beta
        h[base + 4] = 1.0; // d h / d gamma
    }
    Ok((h, predicted))
}

/// Joseph-form covariance update, shared by all measurement types.
fn joseph_update(state: &mut FilterState, h_rows: &[DVector<f64>], innovations: &[f64], r_diag: &[f64]) {
    let dim = state.dim();
    let m = h_rows.len();
    let mut h = DMatrix::zeros(m, dim);
    for (r, row) in h_rows.iter().enumerate() {
        h.row_mut(r).copy_from(&row.transpose());
    }
    let r_mat = DMatrix::from_diagonal(&DVector::from_column_slice(r_diag));
    let innovation = DVector::from_column_slice(innovations);

    let pht = &state.covariance * h.transpose();
    let s = &h * &pht + &r_mat;
    let s_inv = s.try_inverse().expect("innovation covariance invertible");
    let gain = pht * s_inv;

    state.apply_correction(&(&gain * innovation));
    let i_kh = DMatrix::identity(dim, dim) - &gain * h;
    state.covariance = &i_kh * &state.covariance * i_kh.transpose() + &gain * r_mat * gain.transpose();
    state.symmetrize();
}

/// EKF update with a single range measurement of std `sigma_range`.
///
/// Fixed anchors contribute no state columns; online-refined anchors'
/// position and bias blocks are corrected along with the vehicle.
pub fn range_update(
    state: &FilterState,
    registry: &AnchorRegistry,
    z: &RangeMeasurement,
    sigma_range: f64,
) -> Result<FilterState> {
    let mut next = state.clone();
    let (h, predicted) = range_row(state, registry, z)?;
    joseph_update(&mut next, &[h], &[z.range - predicted], &[sigma_range.powi(2)]);
    Ok(next)
}

/// 99.7% chi-square bound for a scalar innovation (1 degree of freedom).
pub const CHI2_GATE_1DOF_997: f64 = 8.807;

/// [`range_update`] with an innovation gate: the measurement is applied only
/// when its normalized innovation squared `v^2 / S` stays below `gate`
/// (e.g. [`CHI2_GATE_1DOF_997`]). Returns whether the update was applied.
/// Nothing in the toolkit gates by default; outlier streams can opt in.
pub fn range_update_gated(
    state: &FilterState,
    registry: &AnchorRegistry,
    z: &RangeMeasurement,
    sigma_range: f64,
    gate: f64,
) -> Result<(FilterState, bool)> {
    let (h, predicted) = range_row(state, registry, z)?;
    let innovation = z.range - predicted;
    let s = (h.transpose() * &state.covariance * &h)[0] + sigma_range.powi(2);
    if innovation * innovation / s > gate {
        return Ok((state.clone(), false));
    }
    let mut next = state.clone();
    joseph_update(&mut next, &[h], &[innovation], &[sigma_range.powi(2)]);
    Ok((next, true))
}

/// Batch update with several ranges sharing one timestamp: all rows and
/// predictions are linearized at the same (current) mean and applied jointly.
pub fn range_update_batch(
    state: &FilterState,
    registry: &AnchorRegistry,
    zs: &[RangeMeasurement],
    sigma_range: f64,
) -> Result<FilterState> {
    let mut next = state.clone();
    let mut rows = Vec::with_capacity(zs.len());
    let mut innovations = Vec::with_capacity(zs.len());
    for z in zs {
        let (h, predicted) = range_row(state, registry, z)?;
        rows.push(h);
        innovations.push(z.range - predicted);
    }
    let r_diag = vec![sigma_range.powi(2); zs.len()];
    joseph_update(&mut next, &rows, &innovations, &r_diag);
    Ok(next)
}

/// Direct position measurement (the stand-in for an external pose source).
pub fn pose_update(state: &FilterState, position: &Vec3, sigma: f64) -> FilterState {
    let mut next = state.clone();
    let dim = state.dim();
    let mut rows = Vec::with_capacity(3);
    let mut innovations = Vec::with_capacity(3);
    for i in 0..3 {
        let mut h = DVector::zeros(dim);
        h[i] = 1.0;
        rows.push(h);
        innovations.push(position[i] - state.position[i]);
    }
    joseph_update(&mut next, &rows, &innovations, &[sigma.powi(2); 3]);
    next
}

/// Range measurements awaiting the next pose time, in strict time order.
#[derive(Debug, Clone, Default)]
pub struct MeasurementBuffer {
    items: Vec<RangeMeasurement>,
}

impl MeasurementBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rejects timestamps that do not strictly increase.
    pub fn push(&mut self, m: RangeMeasurement) -> Result<()> {
        if let Some(last) = self.items.last() {
            if m.timestamp <= last.timestamp {
                return Err(Error::OutOfOrderBuffer { t: m.timestamp });
            }
        }
        self.items.push(m);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// One step of a delayed-update flush, for auditing the replay order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlushStep {
    Propagate { from: f64, to: f64 },
    RangeUpdate { anchor_id: u32, time: f64 },
    PoseUpdate { time: f64 },
}

/// Replays the buffered ranges in time order — propagate to each measurement,
/// update, then propagate to `camera_time` and apply the pose measurement if
/// one survived (dropouts suppress it, the flush boundary stays). The buffer
/// is emptied. Returns the new state and the executed step sequence.
pub fn delayed_flush(
    state: &FilterState,
    registry: &AnchorRegistry,
    buffer: &mut MeasurementBuffer,
    camera_time: f64,
    pose: Option<(Vec3, f64)>,
    sigma_range: f64,
    accel_psd: f64,
) -> Result<(FilterState, Vec<FlushStep>)> {
    let mut current = state.clone();
    let mut steps = Vec::new();
    for m in buffer.items.drain(..) {
        if m.timestamp < current.time || m.timestamp > camera_time {
            return Err(Error::OutOfOrderBuffer { t: m.timestamp });
        }
        if m.timestamp > current.time {
            steps.push(FlushStep::Propagate { from: current.time, to: m.timestamp });
            current = propagate(&current, m.timestamp - current.time, accel_psd);
        }
        current = range_update(&current, registry, &m, sigma_range)?;
        steps.push(FlushStep::RangeUpdate { anchor_id: m.anchor_id, time: m.timestamp });
    }
    if camera_time > current.time {
        steps.push(FlushStep::Propagate { from: current.time, to: camera_time });
        current = propagate(&current, camera_time - current.time, accel_psd);
    }
    if let Some((position, sigma)) = pose {
        current = pose_update(&current, &position, sigma);
        steps.push(FlushStep::PoseUpdate { time: camera_time });
    }
    Ok((current, steps))
}

/// One camera-cadence tick; `pose` is absent inside dropout windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraTick {
    pub time: f64,
    pub pose: Option<Vec3>,
}

/// Suppresses pose measurements inside the `[start, end]` dropout windows,
/// keeping the tick (and hence the flush boundary) itself.
pub fn inject_dropout(schedule: &[(f64, f64)], stream: &[CameraTick]) -> Vec<CameraTick> {
    stream
        .iter()
        .map(|tick| {
            let dropped = schedule.iter().any(|&(a, b)| tick.time >= a && tick.time <= b);
            CameraTick { time: tick.time, pose: if dropped { None } else { tick.pose } }
        })
        .collect()
}
