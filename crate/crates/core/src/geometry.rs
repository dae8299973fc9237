//! Rigid-motion algebra and pose error metrics.
//!
//! Angles cross the public API in degrees and are converted to radians
//! internally. Euler angles are composed as `R = Rz(γ)·Ry(β)·Rx(α)`: the
//! rotation about X is applied first, then Y, then Z.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed::rng_from_seed;

pub type Vec3 = Vector3<f64>;

/// Rotation followed by translation: `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "TransformRepr", from = "TransformRepr")]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

/// Row-major wire layout used in every JSON file.
#[derive(Serialize, Deserialize)]
struct TransformRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl From<RigidTransform> for TransformRepr {
    fn from(t: RigidTransform) -> Self {
        let r = &t.rotation;
        TransformRepr {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl From<TransformRepr> for RigidTransform {
    fn from(r: TransformRepr) -> Self {
        let m = r.rotation;
        RigidTransform {
            rotation: Matrix3::new(
                m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
            ),
            translation: Vec3::from(r.translation),
        }
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Self {
        RigidTransform { rotation, translation }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: Matrix3<f64>) -> Self {
        RigidTransform {
            rotation,
            translation: Vec3::zeros(),
        }
    }

    /// `(a∘b)(p) = a(b(p))`.
    pub fn compose(&self, b: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * b.rotation,
            translation: self.rotation * b.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    #[inline]
    pub fn apply_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        is_rotation(&self.rotation, tol) && self.translation.iter().all(|c| c.is_finite())
    }
}

/// Orthonormal with determinant +1, both within `tol`.
pub fn is_rotation(r: &Matrix3<f64>, tol: f64) -> bool {
    let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
    ortho <= tol && (r.determinant() - 1.0).abs() <= tol
}

pub fn rot_x(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotation by `deg` degrees about a (not necessarily unit) axis.
pub fn rot_axis_angle(axis: &Vec3, deg: f64) -> Matrix3<f64> {
    let k = axis.normalize();
    let (s, c) = deg.to_radians().sin_cos();
    let kx = k.cross_matrix();
    Matrix3::identity() + kx * s + kx * kx * (1.0 - c)
}

/// `Rz(z)·Ry(y)·Rx(x)`, angles in degrees.
pub fn euler_xyz(x: f64, y: f64, z: f64) -> Matrix3<f64> {
    rot_z(z) * rot_y(y) * rot_x(x)
}

/// Inverse of [`euler_xyz`] for `|y| < 90°`; returns `(x, y, z)` in degrees.
pub fn euler_xyz_angles(r: &Matrix3<f64>) -> (f64, f64, f64) {
    let y = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
    let x = r[(2, 1)].atan2(r[(2, 2)]);
    let z = r[(1, 0)].atan2(r[(0, 0)]);
    (x.to_degrees(), y.to_degrees(), z.to_degrees())
}

/// Geodesic angle between two rotations in degrees, in `[0°, 180°]`.
///
/// Uses `atan2(sin, cos)` of the relative rotation rather than `acos` of the
/// trace, which loses half the digits near zero.
pub fn rotation_error(pred: &Matrix3<f64>, gt: &Matrix3<f64>) -> f64 {
    rotation_error_rad(pred, gt).to_degrees()
}

/// [`rotation_error`] in radians.
pub fn rotation_error_rad(pred: &Matrix3<f64>, gt: &Matrix3<f64>) -> f64 {
    let q = pred.transpose() * gt;
    let cos = (q.trace() - 1.0) / 2.0;
    let sin = Vec3::new(q[(2, 1)] - q[(1, 2)], q[(0, 2)] - q[(2, 0)], q[(1, 0)] - q[(0, 1)]).norm() / 2.0;
    sin.atan2(cos)
}

/// Squared Euclidean distance `‖t̂ − t‖²`. Take the square root for metric
/// thresholds.
pub fn translation_error_l2(pred: &Vec3, gt: &Vec3) -> f64 {
    (pred - gt).norm_squared()
}

/// Mean of the squared per-component differences.
pub fn translation_mse(pred: &Vec3, gt: &Vec3) -> f64 {
    (pred - gt).norm_squared() / 3.0
}

/// Per-axis sampling bounds for random rigid transforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerRanges {
    /// `(min, max)` degrees for the X, Y and Z angles.
    pub rotation_deg: [(f64, f64); 3],
    /// `(min, max)` translation per axis.
    pub translation: [(f64, f64); 3],
}

impl EulerRanges {
    /// `[0°, 45°]` on every axis, translation in `[-0.5, 0.5]`.
    pub fn partial_45() -> Self {
        EulerRanges {
            rotation_deg: [(0.0, 45.0); 3],
            translation: [(-0.5, 0.5); 3],
        }
    }

    /// `[-180°, 180°]` on X and Z, `[-90°, 90°]` on Y.
    pub fn full() -> Self {
        EulerRanges {
            rotation_deg: [(-180.0, 180.0), (-90.0, 90.0), (-180.0, 180.0)],
            translation: [(-0.5, 0.5); 3],
        }
    }

    pub fn zero() -> Self {
        EulerRanges {
            rotation_deg: [(0.0, 0.0); 3],
            translation: [(0.0, 0.0); 3],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.rotation_deg
            .iter()
            .chain(self.translation.iter())
            .all(|&(lo, hi)| lo.is_finite() && hi.is_finite() && lo <= hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> RigidTransform {
        let mut draw = |(lo, hi): (f64, f64)| if lo == hi { lo } else { rng.random_range(lo..=hi) };
        let [ax, ay, az] = self.rotation_deg;
        let (x, y, z) = (draw(ax), draw(ay), draw(az));
        let [tx, ty, tz] = self.translation;
        let t = Vec3::new(draw(tx), draw(ty), draw(tz));
        RigidTransform::new(euler_xyz(x, y, z), t)
    }
}

pub fn sample_random_transform(ranges: &EulerRanges, seed: u64) -> RigidTransform {
    ranges.sample(&mut rng_from_seed(seed))
}
