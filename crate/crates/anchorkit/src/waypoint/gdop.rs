//! Geometric dilution of precision for a waypoint set seen from an anchor.
//!
//! Each waypoint contributes a direction-cosine row
//! `[cos(el)cos(az), cos(el)sin(az), sin(el), 1]` pointing from the waypoint
//! toward the anchor; GDOP is `sqrt(trace((H^T H)^-1))`. It depends only on
//! the angles, never on the distances.

use nalgebra::{Dyn, Matrix4, OMatrix, RowVector4, U4};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::model::MIN_RANGE_DISTANCE;
use crate::waypoint::FlightVolume;

/// GDOP needs at least four waypoints for the four-column geometry.
pub const MIN_WAYPOINTS: usize = 4;

/// Condition-number limit on `H^T H`; beyond it the geometry is reported as
/// singular rather than inverted.
pub const MAX_GEOMETRY_CONDITION: f64 = 1e10;

/// Objective value standing in for an infeasible or singular candidate, kept
/// finite so fitness-proportional selection stays well defined.
pub const INFEASIBLE_SENTINEL: f64 = 1e12;

/// Azimuth (quadrant-aware, in (-pi, pi]) and elevation (in [-pi/2, pi/2]) of
/// the anchor as seen from the waypoint.
///
/// A vertically aligned pair (zero horizontal distance) returns azimuth 0 and
/// elevation +-pi/2 by convention; a coincident pair is degenerate.
pub fn direction_angles(anchor: &Vec3, waypoint: &Vec3) -> Result<(f64, f64)> {
    let diff = anchor - waypoint;
    let dist = diff.norm();
    if dist <= MIN_RANGE_DISTANCE {
        return Err(Error::DegenerateGeometry { distance: dist, min: MIN_RANGE_DISTANCE });
    }
    let horizontal = diff.x.hypot(diff.y);
    if horizontal <= MIN_RANGE_DISTANCE {
        let elevation = if diff.z >= 0.0 { std::f64::consts::FRAC_PI_2 } else { -std::f64::consts::FRAC_PI_2 };
        return Ok((0.0, elevation));
    }
    Ok((diff.y.atan2(diff.x), diff.z.atan2(horizontal)))
}

/// Direction-cosine Jacobian, one row per waypoint. The first three entries
/// of each row form a unit vector.
pub fn build_h(anchor: &Vec3, waypoints: &[Vec3]) -> Result<OMatrix<f64, Dyn, U4>> {
    if waypoints.len() < MIN_WAYPOINTS {
        return Err(Error::InsufficientSamples { need: MIN_WAYPOINTS, got: waypoints.len() });
    }
    let mut h = OMatrix::<f64, Dyn, U4>::zeros(waypoints.len());
    for (i, wp) in waypoints.iter().enumerate() {
        let (az, el) = direction_angles(anchor, wp)?;
        h.set_row(i, &RowVector4::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin(), 1.0));
    }
    Ok(h)
}

fn normal_matrix_checked(anchor: &Vec3, waypoints: &[Vec3]) -> Result<Matrix4<f64>> {
    let h = build_h(anchor, waypoints)?;
    let n = h.transpose() * h;
    let svd = n.svd(false, false);
    let condition = svd.singular_values.max() / svd.singular_values.min();
    if !condition.is_finite() || condition > MAX_GEOMETRY_CONDITION {
        return Err(Error::SingularGeometry { condition });
    }
    Ok(n)
}

/// `sqrt(trace((H^T H)^-1))`; invariant under waypoint reordering and under
/// radial scaling of the waypoint-anchor offsets.
pub fn gdop(anchor: &Vec3, waypoints: &[Vec3]) -> Result<f64> {
    let n = normal_matrix_checked(anchor, waypoints)?;
    let inv = n.try_inverse().ok_or(Error::SingularGeometry { condition: f64::INFINITY })?;
    Ok(inv.trace().sqrt())
}

/// For exactly four waypoints, `det(H^T H)` both by the closed-form cofactor
/// expansion `(h_1 - h_2 + h_3 - h_4)^2` and by numeric evaluation; returned
/// as `(closed_form, numeric)` for comparison.
pub fn det_identity_check(anchor: &Vec3, waypoints: &[Vec3; 4]) -> Result<(f64, f64)> {
    let mut az = [0.0; 4];
    let mut el = [0.0; 4];
    for (i, wp) in waypoints.iter().enumerate() {
        let (a, e) = direction_angles(anchor, wp)?;
        az[i] = a;
        el[i] = e;
    }
    let (cg, sg): (Vec<f64>, Vec<f64>) = az.iter().map(|a| (a.cos(), a.sin())).unzip();
    let (cp, sp): (Vec<f64>, Vec<f64>) = el.iter().map(|e| (e.cos(), e.sin())).unzip();
    let ds = |i: usize, j: usize| sp[i] - sp[j];

    // h_t is the first-column cofactor term for row t; (i, j, k) are the
    // remaining rows in ascending order.
    let mut h = [0.0; 4];
    for t in 0..4 {
        let others: Vec<usize> = (0..4).filter(|&m| m != t).collect();
        let (i, j, k) = (others[0], others[1], others[2]);
        h[t] = -cg[t] * cp[t] * (cp[k] * sg[k] * ds(j, i) + cp[j] * sg[j] * ds(i, k) + cp[i] * sg[i] * ds(k, j));
    }
    let closed = (h[0] - h[1] + h[2] - h[3]).powi(2);

    let hm = build_h(anchor, &waypoints[..])?;
    let numeric = (hm.transpose() * hm).determinant();
    Ok((closed, numeric))
}

/// Mean GDOP over all anchors, with the volume indicator folded in: any
/// waypoint outside the volume, or any singular per-anchor geometry, yields
/// [`INFEASIBLE_SENTINEL`].
pub fn objective(waypoints: &[Vec3], anchors: &[Vec3], volume: &FlightVolume) -> f64 {
    if anchors.is_empty() || waypoints.len() < MIN_WAYPOINTS {
        return INFEASIBLE_SENTINEL;
    }
    if waypoints.iter().any(|p| !volume.contains(p)) {
        return INFEASIBLE_SENTINEL;
    }
    let mut total = 0.0;
    for anchor in anchors {
        match gdop(anchor, waypoints) {
            Ok(g) => total += g,
            Err(_) => return INFEASIBLE_SENTINEL,
        }
    }
    total / anchors.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn angles_axis_aligned() {
        // Anchor directly above the waypoint.
        let (az, el) = direction_angles(&Vec3::zeros(), &Vec3::new(0.0, 0.0, -1.0)).unwrap();
        assert_eq!(az, 0.0);
        assert_relative_eq!(el, FRAC_PI_2);

        let (az, el) = direction_angles(&Vec3::new(1.0, 1.0, 0.0), &Vec3::zeros()).unwrap();
        assert_relative_eq!(az, FRAC_PI_4);
        assert_abs_diff_eq!(el, 0.0);
    }

    #[test]
    fn coincident_pair_is_degenerate() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        assert!(matches!(direction_angles(&p, &p), Err(Error::DegenerateGeometry { .. })));
    }

    /// The H row rebuilt from the angles must equal the normalized
    /// waypoint-to-anchor direction itself.
    #[test]
    fn angles_reconstruct_unit_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let a = Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-2.0..8.0));
            let q = Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.0..7.0));
            if (a - q).norm() < 1e-6 {
                continue;
            }
            let (az, el) = direction_angles(&a, &q).unwrap();
            let rebuilt = Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            assert_relative_eq!(rebuilt, (a - q).normalize(), epsilon = 1e-12);
        }
    }

    #[test]
    fn h_rows_are_unit_plus_one() {
        let anchor = Vec3::new(0.5, -0.25, 2.0);
        let wps = vec![
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(-1.0, 1.0, 1.0),
            Vec3::new(0.0, -2.0, 0.5),
            Vec3::new(1.0, 1.0, 4.0),
            Vec3::new(-2.0, -1.0, 3.0),
        ];
        let h = build_h(&anchor, &wps).unwrap();
        for (i, wp) in wps.iter().enumerate() {
            let row = h.row(i);
            assert_relative_eq!(row.columns(0, 3).norm(), 1.0, epsilon = 1e-12);
            assert_eq!(row[3], 1.0);
            // Dual route: rows from direct normalization, no trig involved.
            let dir = (anchor - wp).normalize();
            assert_relative_eq!(Vec3::new(row[0], row[1], row[2]), dir, epsilon = 1e-12);
        }
    }

    #[test]
    fn h_rows_on_unit_axes() {
        let wps = vec![Vec3::x(), Vec3::y(), Vec3::z(), -Vec3::x()];
        let h = build_h(&Vec3::zeros(), &wps).unwrap();
        assert_relative_eq!(h.row(0).clone_owned(), RowVector4::new(-1.0, 0.0, 0.0, 1.0), epsilon = 1e-12);
        assert_relative_eq!(h.row(2).clone_owned(), RowVector4::new(0.0, 0.0, -1.0, 1.0), epsilon = 1e-12);
    }

    #[test]
    fn identical_waypoints_are_singular() {
        let wps = vec![Vec3::x(); 4];
        assert!(matches!(gdop(&Vec3::zeros(), &wps), Err(Error::SingularGeometry { .. })));
    }

    /// Hand-rolled Gauss-Jordan trace of the inverse, independent of the
    /// library inversion path.
    fn gauss_trace_inverse(mut n: [[f64; 4]; 4]) -> f64 {
        let mut inv = [[0.0; 4]; 4];
        for (i, row) in inv.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for col in 0..4 {
            let pivot = (col..4).max_by(|&a, &b| n[a][col].abs().total_cmp(&n[b][col].abs())).unwrap();
            n.swap(col, pivot);
            inv.swap(col, pivot);
            let p = n[col][col];
            for j in 0..4 {
                n[col][j] /= p;
                inv[col][j] /= p;
            }
            for row in 0..4 {
                if row != col {
                    let f = n[row][col];
                    for j in 0..4 {
                        n[row][j] -= f * n[col][j];
                        inv[row][j] -= f * inv[col][j];
                    }
                }
            }
        }
        inv[0][0] + inv[1][1] + inv[2][2] + inv[3][3]
    }

    #[test]
    fn tetrahedron_gdop_matches_independent_inverse() {
        // Regular tetrahedron of directions: trace((H^T H)^-1) = 2.5 exactly,
        // frozen from an independent numeric evaluation.
        let s = 1.0 / 3.0_f64.sqrt();
        let dirs = [
            Vec3::new(s, s, s),
            Vec3::new(s, -s, -s),
            Vec3::new(-s, s, -s),
            Vec3::new(-s, -s, s),
        ];
        let anchor = Vec3::new(0.4, 0.8, 1.2);
        let wps: Vec<Vec3> = dirs.iter().map(|d| anchor - 2.0 * d).collect();
        let g = gdop(&anchor, &wps).unwrap();
        assert_relative_eq!(g, 2.5_f64.sqrt(), epsilon = 1e-12);

        let h = build_h(&anchor, &wps).unwrap();
        let n = h.transpose() * h;
        let mut raw = [[0.0; 4]; 4];
        for (i, row) in raw.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = n[(i, j)];
            }
        }
        assert_relative_eq!(g, gauss_trace_inverse(raw).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn gdop_is_reorder_and_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let anchor = Vec3::new(1.0, -2.0, 0.5);
        let wps: Vec<Vec3> = (0..6)
            .map(|_| Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(1.0..7.0)))
            .collect();
        let base = gdop(&anchor, &wps).unwrap();

        let mut shuffled = wps.clone();
        shuffled.swap(0, 3);
        shuffled.swap(1, 5);
        assert_relative_eq!(gdop(&anchor, &shuffled).unwrap(), base, epsilon = 1e-12);

        // Radial scaling about the anchor keeps every angle.
        let scaled: Vec<Vec3> = wps.iter().map(|q| anchor + 3.7 * (q - anchor)).collect();
        assert_relative_eq!(gdop(&anchor, &scaled).unwrap(), base, epsilon = 1e-9);
    }

    fn random_wellposed_config(rng: &mut ChaCha8Rng) -> (Vec3, [Vec3; 4]) {
        loop {
            let anchor = Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-1.0..8.0));
            let wps = [(); 4].map(|_| {
                Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.0..7.0))
            });
            if let Ok(h) = build_h(&anchor, &wps) {
                let n = h.transpose() * h;
                let svd = n.svd(false, false);
                let cond = svd.singular_values.max() / svd.singular_values.min();
                // Keep away from the singular regime, where f64 cancellation
                // in both determinant routes dominates the comparison.
                if cond.is_finite() && cond < 1e6 {
                    return (anchor, wps);
                }
            }
        }
    }

    #[test]
    fn det_identity_on_seeded_configs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2718);
        for _ in 0..100 {
            let (anchor, wps) = random_wellposed_config(&mut rng);
            let (closed, numeric) = det_identity_check(&anchor, &wps).unwrap();
            assert_relative_eq!(closed, numeric, max_relative = 1e-9);
        }
    }

    #[test]
    fn det_identity_axis_aligned_tetrahedron() {
        // Frozen from the numeric determinant for this fixed geometry.
        let wps = [Vec3::x(), Vec3::y(), Vec3::z(), Vec3::zeros()];
        let anchor = Vec3::new(2.0, 3.0, 4.0);
        let (closed, numeric) = det_identity_check(&anchor, &wps).unwrap();
        assert_relative_eq!(numeric, 8.314129685680813e-7, max_relative = 1e-9);
        assert_relative_eq!(closed, numeric, max_relative = 1e-7);
    }

    #[test]
    fn det_identity_coplanar_is_zero() {
        // All waypoints at the same elevation ring around the anchor: H has
        // two dependent columns, so both routes collapse to ~0.
        let anchor = Vec3::new(0.0, 0.0, 5.0);
        let wps = [
            Vec3::new(2.0, 0.0, 3.0),
            Vec3::new(-2.0, 0.0, 3.0),
            Vec3::new(0.0, 2.0, 3.0),
            Vec3::new(0.0, -2.0, 3.0),
        ];
        let (closed, numeric) = det_identity_check(&anchor, &wps).unwrap();
        assert_abs_diff_eq!(closed, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(numeric, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn objective_single_anchor_equals_gdop() {
        let volume = FlightVolume::cuboid(Vec3::new(0.0, 0.0, 3.5), 6.0, 6.0, 7.0);
        let anchor = Vec3::new(1.0, 1.0, 0.0);
        let wps = vec![
            Vec3::new(2.0, 2.0, 1.0),
            Vec3::new(-2.0, 2.0, 2.0),
            Vec3::new(2.0, -2.0, 5.0),
            Vec3::new(-2.0, -2.0, 6.0),
        ];
        assert_eq!(objective(&wps, &[anchor], &volume), gdop(&anchor, &wps).unwrap());
    }

    #[test]
    fn objective_sentinel_outside_volume() {
        let volume = FlightVolume::cuboid(Vec3::new(0.0, 0.0, 3.5), 6.0, 6.0, 7.0);
        let anchor = Vec3::new(1.0, 1.0, 0.0);
        let mut wps = vec![
            Vec3::new(2.0, 2.0, 1.0),
            Vec3::new(-2.0, 2.0, 2.0),
            Vec3::new(2.0, -2.0, 5.0),
            Vec3::new(-2.0, -2.0, 6.0),
        ];
        wps[0].x = 99.0;
        assert_eq!(objective(&wps, &[anchor], &volume), INFEASIBLE_SENTINEL);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn point() -> impl Strategy<Value = Vec3> {
            (-3.0..3.0f64, -3.0..3.0f64, 0.0..7.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
        }

        proptest! {
            /// GDOP never depends on the waypoint order. Summation order
            /// amplifies rounding by the condition number, so the 1e-12
            /// bound is asserted on well-conditioned geometry.
            #[test]
            fn gdop_reorder_invariance(
                anchor in (-5.0..5.0f64, -5.0..5.0f64, -1.0..8.0f64),
                wps in proptest::collection::vec(point(), 4..9),
                swap in (0usize..8, 0usize..8),
            ) {
                let anchor = Vec3::new(anchor.0, anchor.1, anchor.2);
                let h = build_h(&anchor, &wps).unwrap();
                let n = h.transpose() * h;
                let svd = n.svd(false, false);
                let cond = svd.singular_values.max() / svd.singular_values.min();
                prop_assume!(cond.is_finite() && cond < 1e3);

                let base = gdop(&anchor, &wps).unwrap();
                let mut shuffled = wps.clone();
                let (i, j) = (swap.0 % wps.len(), swap.1 % wps.len());
                shuffled.swap(i, j);
                let permuted = gdop(&anchor, &shuffled).unwrap();
                prop_assert!((base - permuted).abs() <= 1e-12 * base.max(1.0));
            }
        }
    }
}
