//! Levenberg-Marquardt refinement of per-anchor parameters.
//!
//! Starting from the coarse linear solution, each anchor's position, constant
//! bias and distance bias are re-estimated by minimizing half the sum of
//! squared range residuals. The damped normal equations use Marquardt
//! scaling,
//!
//! ```text
//! dx = (J^T J + lambda diag(J^T J))^-1 J^T (y - f(x)),
//! ```
//!
//! and the covariance of the accepted optimum is
//! `MSE * (J^T J + lambda diag(J^T J))^-1` with the terminal damping.

use nalgebra::{DVector, Dyn, Matrix5, OMatrix, Vector5, U5};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::model::{predict_range_at, RangeMeasurement};

/// Five unknowns per anchor.
pub const MIN_REFINE_SAMPLES: usize = 5;

/// Lower bound on the distance bias; a negative or vanishing beta inverts the
/// physical meaning of the model, so steps below this are rejected.
pub const MIN_BETA: f64 = 0.1;

/// Per-anchor parameter vector `[p_A, gamma, beta]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorParams {
    pub position: Vec3,
    pub gamma: f64,
    pub beta: f64,
}

impl AnchorParams {
    pub fn new(position: Vec3, gamma: f64, beta: f64) -> Self {
        AnchorParams { position, gamma, beta }
    }

    /// Seed from a coarse solution; the distance bias starts at 1.
    pub fn from_coarse(coarse: &crate::coarse::CoarseSolution) -> Self {
        AnchorParams::new(coarse.anchor_position, coarse.gamma, 1.0)
    }

    pub fn as_anchor(&self, id: u32) -> crate::model::Anchor {
        crate::model::Anchor::new(id, self.position, self.beta, self.gamma)
    }

    fn to_vector(self) -> Vector5<f64> {
        Vector5::new(self.position.x, self.position.y, self.position.z, self.gamma, self.beta)
    }

    fn from_vector(v: &Vector5<f64>) -> Self {
        AnchorParams::new(Vec3::new(v[0], v[1], v[2]), v[3], v[4])
    }
}

/// Damping schedule and termination thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub lambda_init: f64,
    /// Multiplier applied on a rejected step (> 1).
    pub lambda_up: f64,
    /// Multiplier applied on an accepted step (in (0, 1)).
    pub lambda_down: f64,
    pub max_iters: usize,
    /// Relative cost-change tolerance for convergence.
    pub cost_tol: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig { lambda_init: 1e-3, lambda_up: 10.0, lambda_down: 0.1, max_iters: 100, cost_tol: 1e-10 }
    }
}

impl LmConfig {
    fn validate(&self) -> Result<()> {
        if self.lambda_init <= 0.0 || self.lambda_up <= 1.0 || !(0.0..1.0).contains(&self.lambda_down) || self.max_iters == 0 {
            return Err(Error::InvalidConfig(format!("bad LM config: {self:?}")));
        }
        Ok(())
    }
}

/// One solver attempt, for inspecting the damping schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmStep {
    /// Damping used for this attempt.
    pub lambda: f64,
    /// Cost after the attempt (unchanged if rejected).
    pub cost: f64,
    pub accepted: bool,
    pub step_norm: f64,
}

/// Converged (or stopped) refinement output.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedSolution {
    pub params: AnchorParams,
    /// 5x5 covariance of `[p_A, gamma, beta]`, symmetric PSD.
    pub covariance: Matrix5<f64>,
    /// Half the sum of squared residuals at the optimum.
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Residual vector `z_k - h(x, tag_k)` and the `M x 5` Jacobian of the
/// *prediction* `h` (columns: anchor position, gamma, beta).
pub fn residuals_and_jacobian(
    params: &AnchorParams,
    samples: &[RangeMeasurement],
) -> Result<(DVector<f64>, OMatrix<f64, Dyn, U5>)> {
    if samples.is_empty() {
        return Err(Error::InsufficientSamples { need: 1, got: 0 });
    }
    let mut residuals = DVector::zeros(samples.len());
    let mut jacobian = OMatrix::<f64, Dyn, U5>::zeros(samples.len());
    let anchor = params.as_anchor(0);
    for (k, s) in samples.iter().enumerate() {
        let diff = s.tag_position - params.position;
        let d = diff.norm();
        if d <= crate::model::MIN_RANGE_DISTANCE {
            return Err(Error::DegenerateGeometry { distance: d, min: crate::model::MIN_RANGE_DISTANCE });
        }
        residuals[k] = s.range - predict_range_at(&s.tag_position, &anchor)?;
        let dir = params.beta / d * diff;
        // d h / d p_A = -beta (p_U - p_A)^T / d
        jacobian[(k, 0)] = -dir.x;
        jacobian[(k, 1)] = -dir.y;
        jacobian[(k, 2)] = -dir.z;
        jacobian[(k, 3)] = 1.0;
        jacobian[(k, 4)] = d;
    }
    Ok((residuals, jacobian))
}

fn half_squared_norm(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

/// [`refine`] with the per-attempt damping trace attached.
pub fn refine_traced(
    initial: &AnchorParams,
    samples: &[RangeMeasurement],
    config: &LmConfig,
) -> Result<(RefinedSolution, Vec<LmStep>)> {
    config.validate()?;
    if samples.len() < MIN_REFINE_SAMPLES {
        return Err(Error::InsufficientSamples { need: MIN_REFINE_SAMPLES, got: samples.len() });
    }

    let mut x = initial.to_vector();
    let (mut residuals, mut jacobian) = residuals_and_jacobian(&AnchorParams::from_vector(&x), samples)?;
    let mut cost = half_squared_norm(&residuals);
    let mut lambda = config.lambda_init;
    let lambda_ceiling = 1e8 * config.lambda_init;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iters {
        iterations += 1;
        let jtj = jacobian.transpose() * &jacobian;
        let gradient = jacobian.transpose() * &residuals;

        let damped = jtj + lambda * Matrix5::from_diagonal(&jtj.diagonal());
        let step = match damped.cholesky() {
            Some(chol) => chol.solve(&gradient),
            None => {
                if lambda >= lambda_ceiling {
                    return Err(Error::SingularNormalMatrix { lambda });
                }
                trace.push(LmStep { lambda, cost, accepted: false, step_norm: 0.0 });
                lambda *= config.lambda_up;
                continue;
            }
        };

        let candidate = x + step;
        // Reject steps that leave the physically meaningful beta range.
        if candidate[4] < MIN_BETA {
            trace.push(LmStep { lambda, cost, accepted: false, step_norm: step.norm() });
            lambda *= config.lambda_up;
            continue;
        }

        let (new_residuals, new_jacobian) = residuals_and_jacobian(&AnchorParams::from_vector(&candidate), samples)?;
        let new_cost = half_squared_norm(&new_residuals);

        if new_cost <= cost {
            let improvement = cost - new_cost;
            x = candidate;
            residuals = new_residuals;
            jacobian = new_jacobian;
            let step_norm = step.norm();
            cost = new_cost;
            trace.push(LmStep { lambda, cost, accepted: true, step_norm });
            lambda *= config.lambda_down;
            if improvement <= config.cost_tol * cost.max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        } else {
            trace.push(LmStep { lambda, cost, accepted: false, step_norm: step.norm() });
            lambda *= config.lambda_up;
        }
    }

    // Covariance at the accepted optimum, with the terminal damping kept in
    // the normal matrix. MSE uses the residual sum of squares over M - 5
    // degrees of freedom (floored at one).
    let jtj = jacobian.transpose() * &jacobian;
    let damped = jtj + lambda * Matrix5::from_diagonal(&jtj.diagonal());
    let dof = samples.len().saturating_sub(5).max(1) as f64;
    let mse = 2.0 * cost / dof;
    let covariance = match damped.try_inverse() {
        Some(inv) => {
            let cov = mse * inv;
            0.5 * (cov + cov.transpose())
        }
        None => return Err(Error::SingularNormalMatrix { lambda }),
    };

    Ok((
        RefinedSolution { params: AnchorParams::from_vector(&x), covariance, final_cost: cost, iterations, converged },
        trace,
    ))
}

/// Levenberg-Marquardt refinement of one anchor from an initial guess.
pub fn refine(initial: &AnchorParams, samples: &[RangeMeasurement], config: &LmConfig) -> Result<RefinedSolution> {
    refine_traced(initial, samples, config).map(|(solution, _)| solution)
}

/// Refines several anchors over a shared trajectory. The residuals of
/// different anchors are independent, so the joint problem decomposes into
/// per-anchor solves; failures are isolated per anchor.
pub fn refine_all(
    initials: &[(u32, AnchorParams)],
    samples: &[RangeMeasurement],
    config: &LmConfig,
) -> Vec<(u32, Result<RefinedSolution>)> {
    initials
        .iter()
        .map(|(id, initial)| {
            let subset: Vec<RangeMeasurement> = samples.iter().filter(|s| s.anchor_id == *id).copied().collect();
            (*id, refine(initial, &subset, config))
        })
        .collect()
}
