//! Coarse anchor positioning: the optimal double method.
//!
//! Squaring the (unit-beta) range equation and subtracting the squared
//! equation of a designated *pivot* measurement cancels the quadratic terms,
//! leaving a linear system in the anchor position and the constant bias:
//!
//! ```text
//! A_k = [ -(p_i - p_p)^T   (z_i - z_p) ],
//! b_k = ((z_i^2 - z_p^2) - (|p_i|^2 - |p_p|^2)) / 2,
//! A x = b,   x = [p_A  gamma]^T.
//! ```
//!
//! The pivot is chosen by A-optimality: among all candidates, keep the one
//! maximizing the trace of the information matrix `A^T S^-1 A`, where `S`
//! collects the per-row noise variances. Distance bias is fixed to 1 at this
//! stage; it only enters the nonlinear refinement.

use nalgebra::{DMatrix, DVector, Matrix4, RowVector4, Vector4};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::model::{NoiseSpec, RangeMeasurement};

/// Four unknowns need four rows, and the pivot contributes none.
pub const MIN_COARSE_SAMPLES: usize = 5;

/// Floor on the per-row variance so the noiseless case passes through the
/// same weighted path.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Condition-number threshold on the 4x4 normal matrix beyond which the tag
/// trajectory is treated as coplanar/collinear.
pub const MAX_NORMAL_CONDITION: f64 = 1e8;

/// One differenced row of the linear system.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleMethodRow {
    /// 1x4 coefficient row `[-(p_i - p_p)^T, z_i - z_p]`.
    pub coeffs: RowVector4<f64>,
    pub rhs: f64,
    /// Row noise variance, floored at [`VARIANCE_FLOOR`].
    pub variance: f64,
}

/// The assembled weighted linear system for one anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleMethodSystem {
    /// Rows for every sample except the pivot itself.
    pub rows: Vec<DoubleMethodRow>,
    /// Index of the pivot within the original sample list.
    pub pivot_index: usize,
}

/// Result of the coarse weighted least squares.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseSolution {
    pub anchor_position: Vec3,
    pub gamma: f64,
    /// Condition number of the 4x4 normal matrix.
    pub condition_number: f64,
    /// Trace of the information matrix `A^T S^-1 A`.
    pub information_trace: f64,
}

fn check_same_anchor(samples: &[RangeMeasurement]) -> Result<()> {
    if let Some(first) = samples.first() {
        for s in samples {
            if s.anchor_id != first.anchor_id {
                return Err(Error::MismatchedAnchor { expected: first.anchor_id, got: s.anchor_id });
            }
        }
    }
    Ok(())
}

/// Differenced row for `sample` against `pivot`.
///
/// On noiseless inputs the returned row satisfies `A_k . [p_A; gamma] = b_k`
/// exactly. Identical sample and pivot yield the zero row.
pub fn build_row(sample: &RangeMeasurement, pivot: &RangeMeasurement) -> Result<(RowVector4<f64>, f64)> {
    if sample.anchor_id != pivot.anchor_id {
        return Err(Error::MismatchedAnchor { expected: pivot.anchor_id, got: sample.anchor_id });
    }
    let dp = sample.tag_position - pivot.tag_position;
    let coeffs = RowVector4::new(-dp.x, -dp.y, -dp.z, sample.range - pivot.range);
    let rhs = 0.5
        * ((sample.range.powi(2) - pivot.range.powi(2))
            - (sample.tag_position.norm_squared() - pivot.tag_position.norm_squared()));
    Ok((coeffs, rhs))
}

/// Variance of the differenced row noise:
/// `(z_k^2 + z_p^2) sigma_n^2 + p_k S p_k^T + p_p S p_p^T` with isotropic
/// tag-position covariance `S = sigma_p^2 I`.
pub fn pivot_variance(sample: &RangeMeasurement, pivot: &RangeMeasurement, noise: &NoiseSpec) -> f64 {
    let sn2 = noise.sigma_range.powi(2);
    let sp2 = noise.sigma_position.powi(2);
    (sample.range.powi(2) + pivot.range.powi(2)) * sn2
        + sp2 * (sample.tag_position.norm_squared() + pivot.tag_position.norm_squared())
}

/// Trace of the information matrix for a candidate pivot, via the closed-form
/// block sums (the brute-force matrix assembly is only used as a test oracle).
fn information_trace_for(samples: &[RangeMeasurement], pivot_index: usize, noise: &NoiseSpec) -> f64 {
    let pivot = &samples[pivot_index];
    let mut trace = 0.0;
    for (k, s) in samples.iter().enumerate() {
        if k == pivot_index {
            continue;
        }
        let var = pivot_variance(s, pivot, noise).max(VARIANCE_FLOOR);
        let dp = s.tag_position - pivot.tag_position;
        let dz = s.range - pivot.range;
        trace += (dp.norm_squared() + dz * dz) / var;
    }
    trace
}

/// A-optimal pivot: the sample index maximizing the information-matrix trace.
/// Ties break toward the lowest index.
pub fn select_pivot(samples: &[RangeMeasurement], noise: &NoiseSpec) -> Result<usize> {
    if samples.len() < MIN_COARSE_SAMPLES {
        return Err(Error::InsufficientSamples { need: MIN_COARSE_SAMPLES, got: samples.len() });
    }
    check_same_anchor(samples)?;
    let mut best = 0;
    let mut best_trace = f64::NEG_INFINITY;
    for p in 0..samples.len() {
        let trace = information_trace_for(samples, p, noise);
        if trace > best_trace {
            best_trace = trace;
            best = p;
        }
    }
    Ok(best)
}

/// Assembles the weighted system around the A-optimal pivot.
pub fn build_system(samples: &[RangeMeasurement], noise: &NoiseSpec) -> Result<DoubleMethodSystem> {
    let pivot_index = select_pivot(samples, noise)?;
    let pivot = &samples[pivot_index];
    let mut rows = Vec::with_capacity(samples.len() - 1);
    for (k, s) in samples.iter().enumerate() {
        if k == pivot_index {
            continue;
        }
        let (coeffs, rhs) = build_row(s, pivot)?;
        rows.push(DoubleMethodRow { coeffs, rhs, variance: pivot_variance(s, pivot, noise).max(VARIANCE_FLOOR) });
    }
    Ok(DoubleMethodSystem { rows, pivot_index })
}

/// Weighted least-squares solve of an assembled system.
///
/// `x = (A^T W A)^-1 A^T W b` with `W = S^-1`; the rows' variances enter only
/// as weights (the coefficient matrix is treated as deterministic).
pub fn solve_system(system: &DoubleMethodSystem) -> Result<CoarseSolution> {
    let mut normal = Matrix4::zeros();
    let mut rhs = Vector4::zeros();
    for row in &system.rows {
        let w = 1.0 / row.variance;
        normal += w * row.coeffs.transpose() * row.coeffs;
        rhs += w * row.rhs * row.coeffs.transpose();
    }

    let svd = normal.svd(false, false);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    let condition = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    if !condition.is_finite() || condition > MAX_NORMAL_CONDITION {
        return Err(Error::RankDeficient { condition });
    }

    let solution = normal
        .lu()
        .solve(&rhs)
        .ok_or(Error::RankDeficient { condition })?;

    Ok(CoarseSolution {
        anchor_position: Vec3::new(solution[0], solution[1], solution[2]),
        gamma: solution[3],
        condition_number: condition,
        information_trace: normal.trace(),
    })
}

/// The optimal double method end to end: pivot selection, system assembly,
/// weighted least squares.
pub fn solve_coarse(samples: &[RangeMeasurement], noise: &NoiseSpec) -> Result<CoarseSolution> {
    solve_system(&build_system(samples, noise)?)
}

/// Test-oracle helper: the information-matrix trace by explicit assembly of
/// `A` and `S`. Kept public for the acceptance suite; the solver itself uses
/// the closed-form block sums.
pub fn information_trace_brute_force(
    samples: &[RangeMeasurement],
    pivot_index: usize,
    noise: &NoiseSpec,
) -> f64 {
    let pivot = &samples[pivot_index];
    let n = samples.len() - 1;
    let mut a = DMatrix::zeros(n, 4);
    let mut w = DVector::zeros(n);
    let mut r = 0;
    for (k, s) in samples.iter().enumerate() {
        if k == pivot_index {
            continue;
        }
        let (coeffs, _) = build_row(s, pivot).expect("same anchor");
        a.set_row(r, &coeffs);
        w[r] = 1.0 / pivot_variance(s, pivot, noise).max(VARIANCE_FLOOR);
        r += 1;
    }
    let winv = DMatrix::from_diagonal(&w);
    (a.transpose() * winv * a).trace()
}
