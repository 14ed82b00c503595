//! Rigid-motion algebra on SO(3) / SE(3).
//!
//! Twists are ordered `[omega, v]`. Exponential and logarithm switch to Taylor
//! expansions when the rotation angle drops below [`SMALL_ANGLE`].

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Below this angle the closed forms lose precision and series are used.
pub const SMALL_ANGLE: f64 = 1e-4;

/// `log` refuses rotations whose angle is within this distance of π.
pub const NEAR_PI_MARGIN: f64 = 1e-6;

/// Element of se(3): angular part in radians per frame, linear part in scene
/// units per frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Twist {
    pub omega: Vec3,
    pub v: Vec3,
}

impl Twist {
    pub fn new(omega: Vec3, v: Vec3) -> Self {
        Self { omega, v }
    }

    pub fn zero() -> Self {
        Self::new(Vec3::zeros(), Vec3::zeros())
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        assert_eq!(xs.len(), 6, "a twist has 6 components");
        Self::new(
            Vec3::new(xs[0], xs[1], xs[2]),
            Vec3::new(xs[3], xs[4], xs[5]),
        )
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.omega.x,
            self.omega.y,
            self.omega.z,
            self.v.x,
            self.v.y,
            self.v.z,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

/// Element of SE(3) acting as `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Mat3::identity(), Vec3::zeros())
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(Mat3::identity(), t)
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform::new(rt, -(rt * self.translation))
    }

    pub fn apply_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply(&self, points: &[Vec3]) -> Vec<Vec3> {
        points.iter().map(|p| self.apply_point(p)).collect()
    }

    /// Orthogonality and determinant within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        let err = self.rotation.transpose() * self.rotation - Mat3::identity();
        err.amax() <= tol && (self.rotation.determinant() - 1.0).abs() <= tol
    }

    /// Row-major `R` followed by `t`.
    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.x,
            t.y,
            t.z,
        ]
    }

    pub fn from_row_major(xs: &[f64]) -> Self {
        assert_eq!(xs.len(), 12);
        Self::new(
            Mat3::new(
                xs[0], xs[1], xs[2], xs[3], xs[4], xs[5], xs[6], xs[7], xs[8],
            ),
            Vec3::new(xs[9], xs[10], xs[11]),
        )
    }

    /// Largest absolute entry difference in `[R | t]`.
    pub fn max_abs_diff(&self, other: &RigidTransform) -> f64 {
        (self.rotation - other.rotation)
            .amax()
            .max((self.translation - other.translation).amax())
    }
}

pub fn hat_so3(omega: &Vec3) -> Mat3 {
    Mat3::new(
        0.0, -omega.z, omega.y, //
        omega.z, 0.0, -omega.x, //
        -omega.y, omega.x, 0.0,
    )
}

/// Inverse of [`hat_so3`] applied to the skew part of `m`.
pub fn vee_so3(m: &Mat3) -> Vec3 {
    Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// `sin θ / θ`, `(1 - cos θ) / θ²` and `(θ - sin θ) / θ³`.
fn rodrigues_coeffs(theta: f64) -> (f64, f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        (
            1.0 - t2 / 6.0 + t4 / 120.0,
            0.5 - t2 / 24.0 + t4 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0,
        )
    } else {
        let (s, c) = theta.sin_cos();
        let t2 = theta * theta;
        (s / theta, (1.0 - c) / t2, (theta - s) / (t2 * theta))
    }
}

pub fn exp_so3(omega: &Vec3) -> Mat3 {
    let theta = omega.norm();
    let (a, b, _) = rodrigues_coeffs(theta);
    let w = hat_so3(omega);
    Mat3::identity() + w * a + w * w * b
}

/// Rotation angle in `[0, π]`.
pub fn rotation_angle(r: &Mat3) -> f64 {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let sin = (r - r.transpose()).norm() / (2.0 * std::f64::consts::SQRT_2);
    sin.atan2(cos)
}

pub fn log_so3(r: &Mat3) -> Result<Vec3> {
    let theta = rotation_angle(r);
    if std::f64::consts::PI - theta < NEAR_PI_MARGIN {
        return Err(Error::AngleNearPi { trace: r.trace() });
    }
    let skew = vee_so3(r);
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        return Ok(skew * (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0));
    }
    if theta < 3.0 {
        return Ok(skew * (theta / theta.sin()));
    }
    // Close to π the skew part is tiny; recover the axis from the symmetric
    // part (1 - cos θ) a aᵀ and take its sign from the skew part.
    let cos = theta.cos();
    let sym = (r + r.transpose()) * 0.5 - Mat3::identity() * cos;
    let k = (0..3)
        .max_by(|&i, &j| sym[(i, i)].total_cmp(&sym[(j, j)]))
        .unwrap_or(0);
    let mut axis = sym.column(k).into_owned();
    axis /= axis.norm();
    if axis.dot(&skew) < 0.0 {
        axis = -axis;
    }
    Ok(axis * theta)
}

/// Left Jacobian of SO(3), the `V` in `t = V(ω) v`.
pub fn left_jacobian(omega: &Vec3) -> Mat3 {
    let theta = omega.norm();
    let (_, b, c) = rodrigues_coeffs(theta);
    let w = hat_so3(omega);
    Mat3::identity() + w * b + w * w * c
}

pub fn left_jacobian_inv(omega: &Vec3) -> Mat3 {
    let theta = omega.norm();
    let w = hat_so3(omega);
    let coeff = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    } else {
        let (a, b, _) = rodrigues_coeffs(theta);
        (1.0 - a / (2.0 * b)) / (theta * theta)
    };
    Mat3::identity() - w * 0.5 + w * w * coeff
}

pub fn exp_se3(xi: &Twist) -> RigidTransform {
    RigidTransform::new(exp_so3(&xi.omega), left_jacobian(&xi.omega) * xi.v)
}

pub fn log_se3(t: &RigidTransform) -> Result<Twist> {
    let omega = log_so3(&t.rotation)?;
    Ok(Twist::new(omega, left_jacobian_inv(&omega) * t.translation))
}

/// Rotation by `angle` about the line through `center` along `axis`:
/// `T_center⁻¹ · R(angle) · T_center` with `T_center` the shift by `-center`.
pub fn rotation_about_axis(center: &Vec3, axis: &Vec3, angle: f64) -> Result<RigidTransform> {
    let norm = axis.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-6 {
        return Err(Error::DegenerateAxis { norm });
    }
    let r = exp_so3(&(axis / norm * angle));
    Ok(RigidTransform::new(r, center - r * center))
}

/// Angle of `R1ᵀ R2` in degrees, `arccos((tr − 1)/2)` with the argument
/// clamped to `[−1, 1]`. Evaluated through `atan2` so that nearly equal
/// rotations do not lose half their digits to the arccos slope at 1.
pub fn geodesic_angle(r1: &Mat3, r2: &Mat3) -> f64 {
    rotation_angle(&(r1.transpose() * r2)).to_degrees()
}
