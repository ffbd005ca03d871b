//! Biased range measurement model and its analytic Jacobians.
//!
//! A UWB range between the vehicle-mounted tag and an anchor is modeled as
//!
//! ```text
//! h(x) = beta * || p_I + R^T o - p_A || + gamma
//! ```
//!
//! where `p_I` is the vehicle (IMU) position in the global frame, `R` the
//! global-to-body rotation, `o` the body-frame tag offset, `p_A` the anchor
//! position, `beta` a multiplicative distance-dependent bias and `gamma` an
//! additive constant bias.

use nalgebra::RowVector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{skew, Rotation, Vec3};

/// Below this tag-anchor distance the direction (and hence every Jacobian
/// block) is undefined. Far below any physical UWB range.
pub const MIN_RANGE_DISTANCE: f64 = 1e-9;

/// A UWB anchor with its global position and measurement biases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub id: u32,
    /// Global-frame position in meters.
    #[serde(rename = "position_m")]
    pub position: Vec3,
    /// Multiplicative distance bias (unitless, > 0; 1 = unbiased).
    pub beta: f64,
    /// Additive constant bias in meters.
    #[serde(rename = "gamma_m")]
    pub gamma: f64,
}

impl Anchor {
    pub fn new(id: u32, position: Vec3, beta: f64, gamma: f64) -> Self {
        Anchor { id, position, beta, gamma }
    }

    /// An unbiased anchor (`beta = 1`, `gamma = 0`).
    pub fn unbiased(id: u32, position: Vec3) -> Self {
        Anchor::new(id, position, 1.0, 0.0)
    }
}

/// One biased range sample paired with the (possibly noisy) global tag
/// position at collection time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeMeasurement {
    pub anchor_id: u32,
    /// Measured range in meters.
    #[serde(rename = "range_m")]
    pub range: f64,
    /// Collection time in seconds.
    #[serde(rename = "timestamp_s")]
    pub timestamp: f64,
    /// Global tag position at collection time, in meters.
    #[serde(rename = "tag_position_m")]
    pub tag_position: Vec3,
}

/// Noise levels of the data-collection process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Std of the additive range noise, meters.
    #[serde(rename = "sigma_range_m")]
    pub sigma_range: f64,
    /// Isotropic std of the tag-position noise, meters.
    #[serde(rename = "sigma_position_m")]
    pub sigma_position: f64,
}

impl NoiseSpec {
    pub fn new(sigma_range: f64, sigma_position: f64) -> Self {
        NoiseSpec { sigma_range, sigma_position }
    }

    /// Exact measurements (useful in tests).
    pub fn noiseless() -> Self {
        NoiseSpec::new(0.0, 0.0)
    }
}

/// Global tag position `p_I + R^T o`.
pub fn global_tag_position(vehicle_pos: &Vec3, rot: &Rotation, tag_offset: &Vec3) -> Vec3 {
    vehicle_pos + rot.transpose() * tag_offset
}

/// Predicted biased range `beta * d + gamma` for a tag already expressed in
/// the global frame.
pub fn predict_range_at(tag_position: &Vec3, anchor: &Anchor) -> Result<f64> {
    let d = (tag_position - anchor.position).norm();
    if d <= MIN_RANGE_DISTANCE {
        return Err(Error::DegenerateGeometry { distance: d, min: MIN_RANGE_DISTANCE });
    }
    Ok(anchor.beta * d + anchor.gamma)
}

/// Predicted biased range through the full transform chain.
pub fn predict_range(
    vehicle_pos: &Vec3,
    rot: &Rotation,
    tag_offset: &Vec3,
    anchor: &Anchor,
) -> Result<f64> {
    predict_range_at(&global_tag_position(vehicle_pos, rot, tag_offset), anchor)
}

/// Row blocks of the range-measurement Jacobian, all derived from the common
/// row `G = beta * (p_U - p_A)^T / d`.
///
/// `d_rotation` is taken with respect to a small left-multiplied perturbation
/// of the global-to-body rotation, `R <- exp(skew(theta)) * R`; this is the
/// convention the finite-difference suite validates.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeJacobian {
    /// d h / d theta (rotation perturbation), 1x3.
    pub d_rotation: RowVector3<f64>,
    /// d h / d tag_offset, 1x3.
    pub d_tag_offset: RowVector3<f64>,
    /// d h / d vehicle position, 1x3.
    pub d_vehicle_position: RowVector3<f64>,
    /// d h / d anchor position, 1x3. Always `-d_vehicle_position`.
    pub d_anchor_position: RowVector3<f64>,
    /// d h / d beta = unbiased distance.
    pub d_beta: f64,
    /// d h / d gamma = 1.
    pub d_gamma: f64,
}

/// Analytic Jacobian blocks of [`predict_range`] at the given state.
pub fn range_jacobian(
    vehicle_pos: &Vec3,
    rot: &Rotation,
    tag_offset: &Vec3,
    anchor: &Anchor,
) -> Result<RangeJacobian> {
    let tag = global_tag_position(vehicle_pos, rot, tag_offset);
    let diff = tag - anchor.position;
    let d = diff.norm();
    if d <= MIN_RANGE_DISTANCE {
        return Err(Error::DegenerateGeometry { distance: d, min: MIN_RANGE_DISTANCE });
    }
    let gamma_row: RowVector3<f64> = (anchor.beta / d) * diff.transpose();
    let rt = rot.transpose();
    Ok(RangeJacobian {
        d_rotation: gamma_row * rt * skew(tag_offset),
        d_tag_offset: gamma_row * rt,
        d_vehicle_position: gamma_row,
        d_anchor_position: -gamma_row,
        d_beta: d,
        d_gamma: 1.0,
    })
}
