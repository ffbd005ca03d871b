//! Minimum-snap polynomial trajectories through a waypoint sequence.
//!
//! Each axis gets one degree-7 polynomial per segment, parameterized by the
//! position/velocity/acceleration/jerk values at the segment ends. Knot
//! positions and rest-to-rest boundary derivatives are fixed; the interior
//! derivatives are chosen to minimize the integral of squared snap, which is
//! an unconstrained quadratic in them. Segments use normalized time
//! internally, so conditioning is independent of the absolute time scale.

use nalgebra::{DMatrix, DVector, SMatrix, SVector};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Segment durations more uneven than this make the spline ill-conditioned.
pub const MAX_SEGMENT_TIME_RATIO: f64 = 1e4;

type Mat8 = SMatrix<f64, 8, 8>;
type Vec8 = SVector<f64, 8>;

/// A sampled-anywhere piecewise-polynomial trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Cumulative knot times, starting at 0.
    knot_times: Vec<f64>,
    /// Per-segment durations.
    durations: Vec<f64>,
    /// Per-axis, per-segment coefficients in normalized segment time.
    coeffs: [Vec<Vec8>; 3],
    /// The knots the trajectory interpolates.
    points: Vec<Vec3>,
}

impl Trajectory {
    pub fn duration(&self) -> f64 {
        *self.knot_times.last().expect("at least two knots")
    }

    pub fn knot_times(&self) -> &[f64] {
        &self.knot_times
    }

    pub fn knots(&self) -> &[Vec3] {
        &self.points
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let t = t.clamp(0.0, self.duration());
        let mut seg = match self.knot_times.binary_search_by(|k| k.total_cmp(&t)) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        seg = seg.min(self.durations.len() - 1);
        ((seg), (t - self.knot_times[seg]) / self.durations[seg])
    }

    pub fn position(&self, t: f64) -> Vec3 {
        let (seg, tau) = self.locate(t);
        Vec3::from_fn(|axis, _| horner(&self.coeffs[axis][seg], tau, 0))
    }

    pub fn velocity(&self, t: f64) -> Vec3 {
        let (seg, tau) = self.locate(t);
        let scale = 1.0 / self.durations[seg];
        Vec3::from_fn(|axis, _| scale * horner(&self.coeffs[axis][seg], tau, 1))
    }

    pub fn acceleration(&self, t: f64) -> Vec3 {
        let (seg, tau) = self.locate(t);
        let scale = self.durations[seg].powi(-2);
        Vec3::from_fn(|axis, _| scale * horner(&self.coeffs[axis][seg], tau, 2))
    }

    /// Uniform samples at `rate_hz`, always including the final time.
    pub fn sample(&self, rate_hz: f64) -> Vec<(f64, Vec3)> {
        let dt = 1.0 / rate_hz;
        let mut out = Vec::new();
        let mut t = 0.0;
        while t < self.duration() {
            out.push((t, self.position(t)));
            t += dt;
        }
        out.push((self.duration(), self.position(self.duration())));
        out
    }
}

/// Derivative `order` of the polynomial at normalized time `tau`.
fn horner(c: &Vec8, tau: f64, order: usize) -> f64 {
    let mut acc = 0.0;
    for k in (order..8).rev() {
        let mut factor = 1.0;
        for f in 0..order {
            factor *= (k - f) as f64;
        }
        acc = acc * tau + factor * c[k];
    }
    acc
}

/// Maps normalized-time coefficients to `[pos, vel, acc, jerk]` at tau = 0
/// and tau = 1.
fn boundary_map() -> Mat8 {
    let mut m = Mat8::zeros();
    m[(0, 0)] = 1.0;
    m[(1, 1)] = 1.0;
    m[(2, 2)] = 2.0;
    m[(3, 3)] = 6.0;
    for k in 0..8 {
        m[(4, k)] = 1.0;
        if k >= 1 {
            m[(5, k)] = k as f64;
        }
        if k >= 2 {
            m[(6, k)] = (k * (k - 1)) as f64;
        }
        if k >= 3 {
            m[(7, k)] = (k * (k - 1) * (k - 2)) as f64;
        }
    }
    m
}

/// Integral of squared snap over one normalized-time segment.
fn snap_cost_matrix() -> Mat8 {
    let mut q = Mat8::zeros();
    let a = |j: usize| (j * (j - 1) * (j - 2) * (j - 3)) as f64;
    for j in 4..8 {
        for k in 4..8 {
            q[(j, k)] = a(j) * a(k) / (j + k - 7) as f64;
        }
    }
    q
}

/// Real-time derivative values scaled into normalized segment time.
fn time_scale(t: f64) -> SMatrix<f64, 4, 4> {
    SMatrix::<f64, 4, 4>::from_diagonal(&nalgebra::Vector4::new(1.0, t, t * t, t * t * t))
}

/// Minimum-snap trajectory from `start` through `waypoints`, one segment per
/// waypoint, with zero velocity (and acceleration and jerk) at both ends.
///
/// `segment_times[i]` is the duration of the flight into `waypoints[i]`.
pub fn min_snap_trajectory(waypoints: &[Vec3], start: &Vec3, segment_times: &[f64]) -> Result<Trajectory> {
    let mut points = Vec::with_capacity(waypoints.len() + 1);
    points.push(*start);
    points.extend_from_slice(waypoints);
    let n = points.len() - 1;
    if n == 0 {
        return Err(Error::InvalidConfig("need at least one waypoint besides the start".into()));
    }
    if segment_times.len() != n {
        return Err(Error::InvalidConfig(format!(
            "expected {n} segment times, got {}",
            segment_times.len()
        )));
    }
    if segment_times.iter().any(|&t| t <= 0.0 || t.is_nan()) {
        return Err(Error::InvalidConfig("segment times must be positive".into()));
    }
    let t_max = segment_times.iter().cloned().fold(f64::MIN, f64::max);
    let t_min = segment_times.iter().cloned().fold(f64::MAX, f64::min);
    if t_max / t_min > MAX_SEGMENT_TIME_RATIO {
        return Err(Error::IllConditionedSpline { max_ratio: MAX_SEGMENT_TIME_RATIO });
    }

    let m_inv = boundary_map().try_inverse().expect("constant boundary map is invertible");
    let q1 = snap_cost_matrix();

    // Per-segment Hessian over the real-time end derivatives [d_i; d_{i+1}]:
    // T^-7 S^T M^-T Q M^-1 S, with S the per-end time scaling.
    let segment_hessian: Vec<Mat8> = segment_times
        .iter()
        .map(|&t| {
            let mut s = Mat8::zeros();
            s.fixed_view_mut::<4, 4>(0, 0).copy_from(&time_scale(t));
            s.fixed_view_mut::<4, 4>(4, 4).copy_from(&time_scale(t));
            t.powi(-7) * s.transpose() * m_inv.transpose() * q1 * m_inv * s
        })
        .collect();

    // Stacked knot-derivative vector: 4 entries (pos, vel, acc, jerk) per
    // knot. Positions everywhere plus all boundary derivatives are fixed;
    // interior velocities/accelerations/jerks minimize the quadratic cost.
    let dim = 4 * (n + 1);
    let mut derivatives = DVector::zeros(dim);

    let is_free = |idx: usize| {
        let knot = idx / 4;
        let kind = idx % 4;
        kind != 0 && knot != 0 && knot != n
    };
    let free: Vec<usize> = (0..dim).filter(|&i| is_free(i)).collect();

    let mut hessian = DMatrix::zeros(dim, dim);
    for (i, h) in segment_hessian.iter().enumerate() {
        for r in 0..8 {
            for c in 0..8 {
                hessian[(4 * i + r, 4 * i + c)] += h[(r, c)];
            }
        }
    }

    let mut coeffs: [Vec<Vec8>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for axis in 0..3 {
        derivatives.fill(0.0);
        for (i, p) in points.iter().enumerate() {
            derivatives[4 * i] = p[axis];
        }

        if !free.is_empty() {
            // Minimize D^T R D over the free block: R_pp p = -R_pf f.
            let mut r_pp = DMatrix::zeros(free.len(), free.len());
            let mut rhs = DVector::zeros(free.len());
            for (a, &fa) in free.iter().enumerate() {
                for (b, &fb) in free.iter().enumerate() {
                    r_pp[(a, b)] = hessian[(fa, fb)];
                }
                let mut acc = 0.0;
                for idx in 0..dim {
                    if !is_free(idx) {
                        acc += hessian[(fa, idx)] * derivatives[idx];
                    }
                }
                rhs[a] = -acc;
            }
            let solution = r_pp
                .clone()
                .cholesky()
                .map(|c| c.solve(&rhs))
                .or_else(|| r_pp.lu().solve(&rhs))
                .ok_or(Error::IllConditionedSpline { max_ratio: t_max / t_min })?;
            for (a, &fa) in free.iter().enumerate() {
                derivatives[fa] = solution[a];
            }
        }

        for (i, &t) in segment_times.iter().enumerate() {
            let mut ends = Vec8::zeros();
            for k in 0..4 {
                ends[k] = derivatives[4 * i + k];
                ends[4 + k] = derivatives[4 * (i + 1) + k];
            }
            let mut s = Mat8::zeros();
            s.fixed_view_mut::<4, 4>(0, 0).copy_from(&time_scale(t));
            s.fixed_view_mut::<4, 4>(4, 4).copy_from(&time_scale(t));
            coeffs[axis].push(m_inv * s * ends);
        }
    }

    let mut knot_times = Vec::with_capacity(n + 1);
    knot_times.push(0.0);
    for &t in segment_times {
        knot_times.push(knot_times.last().unwrap() + t);
    }

    Ok(Trajectory { knot_times, durations: segment_times.to_vec(), coeffs, points })
}

/// Segment durations proportional to inter-waypoint distance at `speed_mps`,
/// floored so hovering transitions keep a usable duration.
pub fn segment_times(waypoints: &[Vec3], start: &Vec3, speed_mps: f64) -> Vec<f64> {
    let mut times = Vec::with_capacity(waypoints.len());
    let mut prev = *start;
    for wp in waypoints {
        times.push(((wp - prev).norm() / speed_mps).max(0.5));
        prev = *wp;
    }
    times
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn single_segment_matches_rest_to_rest_closed_form() {
        let start = Vec3::new(1.0, -2.0, 0.5);
        let end = Vec3::new(3.0, 4.0, 2.5);
        let t_total = 2.0;
        let traj = min_snap_trajectory(&[end], &start, &[t_total]).unwrap();

        assert_relative_eq!(traj.position(0.0), start, epsilon = 1e-9);
        assert_relative_eq!(traj.position(t_total), end, epsilon = 1e-9);
        assert_abs_diff_eq!(traj.velocity(0.0).norm(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(traj.velocity(t_total).norm(), 0.0, epsilon = 1e-9);

        // Unique degree-7 rest-to-rest interpolant:
        // s(tau) = 35 tau^4 - 84 tau^5 + 70 tau^6 - 20 tau^7.
        for step in 0..=20 {
            let tau = step as f64 / 20.0;
            let s = 35.0 * tau.powi(4) - 84.0 * tau.powi(5) + 70.0 * tau.powi(6) - 20.0 * tau.powi(7);
            let expected = start + s * (end - start);
            assert_relative_eq!(traj.position(tau * t_total), expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn interpolates_knots_with_zero_boundary_velocity() {
        let start = Vec3::zeros();
        let wps = vec![
            Vec3::new(2.0, 1.0, 1.0),
            Vec3::new(3.0, -1.0, 2.0),
            Vec3::new(0.5, 0.5, 3.0),
            Vec3::new(-2.0, 2.0, 1.5),
        ];
        let times = segment_times(&wps, &start, 1.5);
        let traj = min_snap_trajectory(&wps, &start, &times).unwrap();

        for (knot_t, point) in traj.knot_times().iter().zip(traj.knots()) {
            assert!((traj.position(*knot_t) - point).norm() < 1e-9);
        }
        assert!(traj.velocity(0.0).norm() < 1e-9);
        assert!(traj.velocity(traj.duration()).norm() < 1e-9);
    }

    #[test]
    fn collinear_waypoints_stay_on_the_line() {
        let dir = Vec3::new(1.0, 2.0, 0.5).normalize();
        let origin = Vec3::new(0.5, 0.5, 1.0);
        let wps: Vec<Vec3> = (1..=4).map(|i| origin + i as f64 * dir).collect();
        let times = vec![1.0; 4];
        let traj = min_snap_trajectory(&wps, &origin, &times).unwrap();
        for (_, p) in traj.sample(50.0) {
            let rel = p - origin;
            let off_line = rel - rel.dot(&dir) * dir;
            assert!(off_line.norm() < 1e-6, "deviation {}", off_line.norm());
        }
    }

    #[test]
    fn wildly_uneven_times_are_rejected() {
        let wps = vec![Vec3::x(), Vec3::y()];
        let err = min_snap_trajectory(&wps, &Vec3::zeros(), &[1e-3, 1e2]);
        assert!(matches!(err, Err(Error::IllConditionedSpline { .. })));
    }

    #[test]
    fn sample_includes_endpoint() {
        let traj = min_snap_trajectory(&[Vec3::x()], &Vec3::zeros(), &[1.0]).unwrap();
        let samples = traj.sample(7.0);
        assert_eq!(samples.last().unwrap().0, 1.0);
        assert!(samples.len() >= 8);
    }
}
