//! Shared geometric primitives: vectors, rotations, skew matrices.

use nalgebra::Matrix3;

use crate::error::{Error, Result};

/// 3D point or direction in meters (unitless for directions).
pub type Vec3 = nalgebra::Vector3<f64>;

/// Orthonormality / determinant tolerance for [`Rotation::try_from_matrix`].
pub const ROTATION_TOL: f64 = 1e-9;

/// Skew-symmetric cross-product matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// A validated rotation matrix mapping global-frame vectors into the body
/// (IMU) frame: `v_body = R * v_global`.
///
/// Stored as a plain 3x3 matrix (nalgebra column-major storage; constructors
/// take entries in row-major reading order). The transpose maps body to
/// global, which is the only form the range model needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    /// Identity rotation (body frame aligned with global).
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Validates `R^T R = I` and `det R = +1`, both within [`ROTATION_TOL`].
    pub fn try_from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let gram = m.transpose() * m;
        let ortho_err = (gram - Matrix3::identity()).abs().max();
        if ortho_err > ROTATION_TOL {
            return Err(Error::InvalidRotation(format!(
                "R^T R deviates from identity by {ortho_err:.3e}"
            )));
        }
        let det_err = (m.determinant() - 1.0).abs();
        if det_err > ROTATION_TOL {
            return Err(Error::InvalidRotation(format!(
                "determinant deviates from +1 by {det_err:.3e}"
            )));
        }
        Ok(Rotation(m))
    }

    /// Rotation by `angle` radians about `axis` (right-handed).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        Rotation(*nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle).matrix())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Body-to-global matrix `R^T`.
    pub fn transpose(&self) -> Matrix3<f64> {
        self.0.transpose()
    }

    /// Composition `self * other` (apply `other` first).
    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation(self.0 * other.0)
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn skew_matches_cross_product() {
        let a = Vec3::new(1.0, -2.0, 0.5);
        let b = Vec3::new(0.3, 4.0, -1.0);
        assert_relative_eq!(skew(&a) * b, a.cross(&b), epsilon = 1e-15);
    }

    #[test]
    fn rejects_non_orthonormal() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 1e-6, 0.0, 0.0, 1.0);
        assert!(Rotation::try_from_matrix(m).is_err());
    }

    #[test]
    fn rejects_reflection() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert!(Rotation::try_from_matrix(m).is_err());
    }

    #[test]
    fn axis_angle_round_trip() {
        let r = Rotation::from_axis_angle(&Vec3::z(), std::f64::consts::FRAC_PI_2);
        // +90 deg about z maps x to y.
        assert_relative_eq!(r.matrix() * Vec3::x(), Vec3::y(), epsilon = 1e-12);
        assert!(Rotation::try_from_matrix(*r.matrix()).is_ok());
    }
}
