//! Synthetic data collection: survey trajectories and biased noisy ranges.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::geometry::Vec3;
use crate::model::{Anchor, NoiseSpec, RangeMeasurement};
use crate::sim::TrajectorySpec;
use crate::waypoint::FlightVolume;

/// Uniform draw inside the volume (rejection-sampled against the indicator,
/// which only matters for prism footprints).
pub(crate) fn random_point_inside(volume: &FlightVolume, rng: &mut ChaCha8Rng) -> Vec3 {
    let lo = volume.min_corner();
    let hi = volume.max_corner();
    loop {
        let p = Vec3::new(
            rng.random_range(lo.x..=hi.x),
            rng.random_range(lo.y..=hi.y),
            rng.random_range(lo.z..=hi.z),
        );
        if volume.contains(&p) {
            return p;
        }
    }
}

/// A random survey flight: a constant-speed polyline through random interior
/// waypoints, sampled at `spec.samples_per_stage` uniformly spaced times.
/// Straight segments between interior points keep every sample inside a
/// convex volume by construction. A zero-length request degenerates to
/// hovering at the volume center.
pub fn generate_random_trajectory(
    volume: &FlightVolume,
    spec: &TrajectorySpec,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(f64, Vec3)>> {
    if spec.waypoint_count == 0 {
        return Ok(vec![(0.0, volume.center)]);
    }
    // A bounded survey extent models the short local flight the coarse
    // stages start from; waypoints then come from the intersection of the
    // volume with a box around a random interior point.
    let survey_box = spec.survey_half_extent_m.map(|e| {
        let c = random_point_inside(volume, rng);
        (c - Vec3::new(e, e, e), c + Vec3::new(e, e, e))
    });
    let draw = |rng: &mut ChaCha8Rng| loop {
        let p = random_point_inside(volume, rng);
        match &survey_box {
            None => return p,
            Some((lo, hi)) => {
                if p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z {
                    return p;
                }
            }
        }
    };
    let mut knots = Vec::with_capacity(spec.waypoint_count + 1);
    for _ in 0..=spec.waypoint_count {
        knots.push(draw(rng));
    }
    let mut cumulative = vec![0.0];
    for pair in knots.windows(2) {
        cumulative.push(cumulative.last().unwrap() + (pair[1] - pair[0]).norm());
    }
    let total_length = *cumulative.last().unwrap();
    let duration = total_length / spec.speed_mps;

    let count = spec.samples_per_stage.max(1);
    let mut samples = Vec::with_capacity(count);
    let mut segment = 0;
    for k in 0..count {
        let t = duration * k as f64 / (count.max(2) - 1) as f64;
        let s = t * spec.speed_mps;
        while segment + 2 < cumulative.len() && cumulative[segment + 1] < s {
            segment += 1;
        }
        let seg_len = cumulative[segment + 1] - cumulative[segment];
        let alpha = if seg_len > 0.0 { (s - cumulative[segment]) / seg_len } else { 0.0 };
        samples.push((t, knots[segment] + alpha.clamp(0.0, 1.0) * (knots[segment + 1] - knots[segment])));
    }
    Ok(samples)
}

/// Biased noisy ranges from one anchor along a trajectory.
///
/// `z = beta d + gamma + n`; the recorded tag position is the true position
/// plus isotropic noise. Negative draws are rejected and regenerated (the
/// model is a norm plus bias, and downstream squaring would silently accept
/// them).
pub fn simulate_anchor_ranges(
    trajectory: &[(f64, Vec3)],
    anchor: &Anchor,
    noise: &NoiseSpec,
    rng: &mut ChaCha8Rng,
) -> Vec<RangeMeasurement> {
    let range_noise = Normal::new(0.0, noise.sigma_range.max(f64::MIN_POSITIVE)).expect("finite std");
    let pos_noise = Normal::new(0.0, noise.sigma_position.max(f64::MIN_POSITIVE)).expect("finite std");
    trajectory
        .iter()
        .map(|(t, p)| {
            let d = (p - anchor.position).norm();
            let clean = anchor.beta * d + anchor.gamma;
            let mut z = clean;
            if noise.sigma_range > 0.0 {
                z = clean + range_noise.sample(rng);
                while z <= 0.0 {
                    z = clean + range_noise.sample(rng);
                }
            }
            let mut tag = *p;
            if noise.sigma_position > 0.0 {
                tag += Vec3::new(pos_noise.sample(rng), pos_noise.sample(rng), pos_noise.sample(rng));
            }
            RangeMeasurement { anchor_id: anchor.id, range: z, timestamp: *t, tag_position: tag }
        })
        .collect()
}

/// Ranges from every anchor along the trajectory, each anchor drawing from
/// its own stream; flattened in (time, anchor) order.
pub fn simulate_ranges(
    trajectory: &[(f64, Vec3)],
    anchors: &[Anchor],
    noise: &NoiseSpec,
    mut rng_for_anchor: impl FnMut(usize) -> ChaCha8Rng,
) -> Vec<RangeMeasurement> {
    let mut per_anchor: Vec<Vec<RangeMeasurement>> = anchors
        .iter()
        .enumerate()
        .map(|(i, a)| simulate_anchor_ranges(trajectory, a, noise, &mut rng_for_anchor(i)))
        .collect();
    let mut out = Vec::with_capacity(trajectory.len() * anchors.len());
    for k in 0..trajectory.len() {
        for stream in per_anchor.iter_mut() {
            out.push(stream[k]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{SeedTree, StreamKind};
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn volume() -> FlightVolume {
        FlightVolume::cuboid(Vec3::new(0.0, 0.0, 3.5), 6.0, 6.0, 7.0)
    }

    #[test]
    fn zero_waypoints_hover_at_center() {
        let spec = TrajectorySpec { waypoint_count: 0, ..TrajectorySpec::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let traj = generate_random_trajectory(&volume(), &spec, &mut rng).unwrap();
        assert_eq!(traj, vec![(0.0, Vec3::new(0.0, 0.0, 3.5))]);
    }

    #[test]
    fn all_samples_inside_volume() {
        let v = volume();
        let spec = TrajectorySpec::default();
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let traj = generate_random_trajectory(&v, &spec, &mut rng).unwrap();
            assert_eq!(traj.len(), spec.samples_per_stage);
            for (_, p) in &traj {
                assert!(v.contains(p), "sample {p:?} escaped the volume");
            }
        }
    }

    #[test]
    fn trajectory_is_reproducible() {
        let spec = TrajectorySpec::default();
        let a = generate_random_trajectory(&volume(), &spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = generate_random_trajectory(&volume(), &spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noiseless_ranges_are_exact() {
        let anchor = Anchor::new(3, Vec3::new(1.0, -2.0, 0.5), 1.05, 0.3);
        let traj = vec![(0.0, Vec3::zeros()), (1.0, Vec3::new(1.0, 1.0, 1.0))];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ranges = simulate_anchor_ranges(&traj, &anchor, &NoiseSpec::noiseless(), &mut rng);
        for (m, (t, p)) in ranges.iter().zip(&traj) {
            assert_eq!(m.timestamp, *t);
            assert_eq!(m.tag_position, *p);
            assert_relative_eq!(m.range, 1.05 * (p - anchor.position).norm() + 0.3, epsilon = 1e-12);
        }
    }

    #[test]
    fn range_noise_std_matches_spec() {
        let anchor = Anchor::new(0, Vec3::new(10.0, 0.0, 0.0), 1.0, 0.0);
        let traj: Vec<(f64, Vec3)> = (0..10_000).map(|k| (k as f64, Vec3::zeros())).collect();
        let noise = NoiseSpec::new(0.3, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let ranges = simulate_anchor_ranges(&traj, &anchor, &noise, &mut rng);
        let residuals: Vec<f64> = ranges.iter().map(|m| m.range - 10.0).collect();
        let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
        let var = residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (residuals.len() - 1) as f64;
        let std = var.sqrt();
        assert!((std - 0.3).abs() / 0.3 < 0.05, "empirical std {std}");
    }

    #[test]
    fn per_anchor_streams_are_uncorrelated() {
        let anchors = vec![
            Anchor::unbiased(0, Vec3::new(10.0, 0.0, 0.0)),
            Anchor::unbiased(1, Vec3::new(10.0, 0.0, 0.0)),
        ];
        let traj: Vec<(f64, Vec3)> = (0..5_000).map(|k| (k as f64, Vec3::zeros())).collect();
        let noise = NoiseSpec::new(0.3, 0.0);
        let tree = SeedTree::new(5);
        let all = simulate_ranges(&traj, &anchors, &noise, |i| tree.rng(0, StreamKind::InitRanges, i as u32));
        let r0: Vec<f64> = all.iter().filter(|m| m.anchor_id == 0).map(|m| m.range - 10.0).collect();
        let r1: Vec<f64> = all.iter().filter(|m| m.anchor_id == 1).map(|m| m.range - 10.0).collect();
        let n = r0.len() as f64;
        let corr: f64 = r0.iter().zip(&r1).map(|(a, b)| a * b).sum::<f64>() / (n * 0.3 * 0.3);
        assert!(corr.abs() < 0.05, "cross-correlation {corr}");
    }

    #[test]
    fn short_ranges_are_regenerated_positive() {
        // Distance and biases make the clean range tiny, so the noise pushes
        // many draws negative; every kept draw must still be positive.
        let anchor = Anchor::new(0, Vec3::new(0.05, 0.0, 0.0), 1.0, 0.0);
        let traj: Vec<(f64, Vec3)> = (0..2_000).map(|k| (k as f64, Vec3::zeros())).collect();
        let noise = NoiseSpec::new(0.5, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ranges = simulate_anchor_ranges(&traj, &anchor, &noise, &mut rng);
        assert!(ranges.iter().all(|m| m.range > 0.0));
    }
}
