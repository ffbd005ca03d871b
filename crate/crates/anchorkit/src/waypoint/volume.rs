//! Flight volumes: axis-aligned cuboids, optionally restricted to a polygonal
//! footprint (a vertical prism), with the subcube grid used by the planner.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Operational volume for waypoint planning.
///
/// The cuboid spans `length x width x height` meters around `center` (x, y, z
/// axes respectively). `grid` subdivides it into subcubes, one waypoint per
/// subcube; `resolution` is the candidate lattice inside each subcube. When
/// `footprint` is set, the volume is the vertical prism over that polygon
/// intersected with the cuboid's height range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightVolume {
    #[serde(rename = "center_m")]
    pub center: Vec3,
    #[serde(rename = "length_m")]
    pub length: f64,
    #[serde(rename = "width_m")]
    pub width: f64,
    #[serde(rename = "height_m")]
    pub height: f64,
    /// Subcube counts along x, y, z.
    pub grid: [usize; 3],
    /// Candidate lattice per subcube along x, y, z.
    pub resolution: [usize; 3],
    /// Optional x-y footprint polygon (closed implicitly, counter- or
    /// clockwise), in meters.
    #[serde(default, rename = "footprint_m", skip_serializing_if = "Option::is_none")]
    pub footprint: Option<Vec<[f64; 2]>>,
}

impl FlightVolume {
    /// Plain cuboid with the default 2x2x2 subcube grid and 20^3 lattice.
    pub fn cuboid(center: Vec3, length: f64, width: f64, height: f64) -> Self {
        FlightVolume {
            center,
            length,
            width,
            height,
            grid: [2, 2, 2],
            resolution: [20, 20, 20],
            footprint: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.width > 0.0 && self.height > 0.0) {
            return Err(Error::InvalidConfig("volume dimensions must be positive".into()));
        }
        if self.grid.contains(&0) || self.resolution.contains(&0) {
            return Err(Error::InvalidConfig("grid and resolution counts must be >= 1".into()));
        }
        if let Some(fp) = &self.footprint {
            if fp.len() < 3 {
                return Err(Error::InvalidConfig("footprint needs at least 3 vertices".into()));
            }
        }
        Ok(())
    }

    pub fn min_corner(&self) -> Vec3 {
        self.center - 0.5 * Vec3::new(self.length, self.width, self.height)
    }

    pub fn max_corner(&self) -> Vec3 {
        self.center + 0.5 * Vec3::new(self.length, self.width, self.height)
    }

    /// Volume indicator. The boundary counts as inside (closed volume).
    pub fn contains(&self, p: &Vec3) -> bool {
        let lo = self.min_corner();
        let hi = self.max_corner();
        let in_box = (lo.x..=hi.x).contains(&p.x) && (lo.y..=hi.y).contains(&p.y) && (lo.z..=hi.z).contains(&p.z);
        match (&self.footprint, in_box) {
            (_, false) => false,
            (None, true) => true,
            (Some(fp), true) => point_in_polygon(fp, [p.x, p.y]),
        }
    }

    pub fn subcube_count(&self) -> usize {
        self.grid[0] * self.grid[1] * self.grid[2]
    }

    fn subcube_extent(&self) -> Vec3 {
        Vec3::new(
            self.length / self.grid[0] as f64,
            self.width / self.grid[1] as f64,
            self.height / self.grid[2] as f64,
        )
    }

    fn subcube_origin(&self, subcube: usize) -> Vec3 {
        let [nx, ny, _] = self.grid;
        let ix = subcube % nx;
        let iy = (subcube / nx) % ny;
        let iz = subcube / (nx * ny);
        let ext = self.subcube_extent();
        self.min_corner() + Vec3::new(ix as f64 * ext.x, iy as f64 * ext.y, iz as f64 * ext.z)
    }

    /// Lattice cell center `index` of `subcube`; strictly inside the subcube,
    /// hence inside the cuboid by construction.
    pub fn candidate(&self, subcube: usize, index: [usize; 3]) -> Vec3 {
        let ext = self.subcube_extent();
        let [rx, ry, rz] = self.resolution;
        self.subcube_origin(subcube)
            + Vec3::new(
                (index[0] as f64 + 0.5) * ext.x / rx as f64,
                (index[1] as f64 + 0.5) * ext.y / ry as f64,
                (index[2] as f64 + 0.5) * ext.z / rz as f64,
            )
    }

    /// All candidate indices of `subcube` passing the volume indicator.
    /// Equals the full lattice for plain cuboids; footprints may thin it out.
    pub fn feasible_candidates(&self, subcube: usize) -> Vec<[usize; 3]> {
        let [rx, ry, rz] = self.resolution;
        let mut out = Vec::new();
        for iz in 0..rz {
            for iy in 0..ry {
                for ix in 0..rx {
                    let idx = [ix, iy, iz];
                    if self.contains(&self.candidate(subcube, idx)) {
                        out.push(idx);
                    }
                }
            }
        }
        out
    }
}

/// Point-in-polygon by the even-odd crossing rule, counting boundary points
/// as inside. Vertices in order, polygon closed implicitly.
pub fn point_in_polygon(polygon: &[[f64; 2]], point: [f64; 2]) -> bool {
    let n = polygon.len();
    if n < 3 {
        return false;
    }
    let [px, py] = point;

    // Boundary first: on-segment test with a small absolute epsilon.
    let eps = 1e-12;
    for i in 0..n {
        let [ax, ay] = polygon[i];
        let [bx, by] = polygon[(i + 1) % n];
        let cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
        let dot = (px - ax) * (px - bx) + (py - ay) * (py - by);
        let len2 = (bx - ax).powi(2) + (by - ay).powi(2);
        if cross.abs() <= eps * len2.sqrt().max(1.0) && dot <= eps {
            return true;
        }
    }

    let mut inside = false;
    for i in 0..n {
        let [ax, ay] = polygon[i];
        let [bx, by] = polygon[(i + 1) % n];
        if (ay > py) != (by > py) {
            let x_at = ax + (py - ay) / (by - ay) * (bx - ax);
            if px < x_at {
                inside = !inside;
            }
        }
    }
    inside
}
