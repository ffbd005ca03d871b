//! GDOP-optimal waypoint planning and trajectory synthesis.
//!
//! The planner treats a flight volume as a grid of subcubes, one waypoint per
//! subcube, and searches the per-subcube candidate lattices with an
//! evolutionary algorithm that minimizes the mean GDOP over all anchors.
//! A minimum-snap polynomial trajectory is then synthesized through the
//! winning waypoints.

mod evolve;
mod gdop;
mod minsnap;
mod volume;

pub use evolve::{optimize_waypoints, Chromosome, EvoConfig, OptimizedWaypoints};
pub use gdop::{
    build_h, det_identity_check, direction_angles, gdop, objective, INFEASIBLE_SENTINEL,
    MAX_GEOMETRY_CONDITION,
};
pub use minsnap::{min_snap_trajectory, segment_times, Trajectory, MAX_SEGMENT_TIME_RATIO};
pub use volume::{point_in_polygon, FlightVolume};

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

/// An ordered set of 3D waypoints (meters, global frame).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointSet {
    #[serde(rename = "points_m")]
    pub points: Vec<Vec3>,
}

impl WaypointSet {
    pub fn new(points: Vec<Vec3>) -> Self {
        WaypointSet { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// True when every point satisfies the volume indicator.
    pub fn all_inside(&self, volume: &FlightVolume) -> bool {
        self.points.iter().all(|p| volume.contains(p))
    }
}

/// Greedy nearest-neighbor visit order starting from `start`. GDOP does not
/// depend on the order, so this only shapes the flight path.
pub fn order_nearest_neighbor(start: &Vec3, points: &[Vec3]) -> Vec<Vec3> {
    let mut remaining: Vec<Vec3> = points.to_vec();
    let mut ordered = Vec::with_capacity(remaining.len());
    let mut current = *start;
    while !remaining.is_empty() {
        let (idx, _) = remaining
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (p - current).norm_squared()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty");
        current = remaining.swap_remove(idx);
        ordered.push(current);
    }
    ordered
}
