//! Rigid-body primitives shared by every other module.
//!
//! Points and directions are `nalgebra` vectors; poses carry a unit quaternion,
//! a translation and the timestamp of the scan they belong to.

use nalgebra::{Matrix3, SymmetricEigen, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// A point or free vector in meters.
pub type Vec3 = Vector3<f64>;

/// A unit-length direction (surface normal, principal direction, ray).
pub type UnitVec3 = Unit<Vector3<f64>>;

/// Incremental update on SE(3): rotation vector (radians) and translation (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist {
    pub rotation: Vec3,
    pub translation: Vec3,
}

impl Twist {
    pub fn zero() -> Self {
        Self {
            rotation: Vec3::zeros(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Vec3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Packs as `[rx, ry, rz, tx, ty, tz]`, the ordering used by the optimizer.
    pub fn from_array(v: [f64; 6]) -> Self {
        Self {
            rotation: Vec3::new(v[0], v[1], v[2]),
            translation: Vec3::new(v[3], v[4], v[5]),
        }
    }

    pub fn norm(&self) -> f64 {
        (self.rotation.norm_squared() + self.translation.norm_squared()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.rotation
            .iter()
            .chain(self.translation.iter())
            .all(|v| v.is_finite())
    }
}

impl std::ops::Neg for Twist {
    type Output = Twist;

    fn neg(self) -> Twist {
        Twist::new(-self.rotation, -self.translation)
    }
}

/// Sensor pose in the world frame at a given time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
    pub timestamp: f64,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
            timestamp: 0.0,
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
            timestamp: 0.0,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    /// Rotation about the z axis followed by a translation.
    pub fn from_yaw(yaw: f64, translation: Vec3) -> Self {
        Self::new(
            UnitQuaternion::from_axis_angle(&Vec3::z_axis(), yaw),
            translation,
        )
    }

    pub fn with_timestamp(mut self, timestamp: f64) -> Self {
        self.timestamp = timestamp;
        self
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// `R·p + t`.
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `R·n`; translation never applies to directions.
    pub fn rotate_normal(&self, n: &UnitVec3) -> UnitVec3 {
        Unit::new_normalize(self.rotation * n.into_inner())
    }

    /// `self ∘ other`: applying the result equals applying `other` first, then `self`.
    /// The timestamp of `other` is kept.
    pub fn compose(&self, other: &Pose) -> Pose {
        let rotation = renormalize(self.rotation * other.rotation);
        Pose {
            rotation,
            translation: self.rotation * other.translation + self.translation,
            timestamp: other.timestamp,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            rotation: inv,
            translation: -(inv * self.translation),
            timestamp: self.timestamp,
        }
    }

    /// Right-multiplicative exponential map on rotation, additive on translation.
    pub fn retract(&self, delta: &Twist) -> Pose {
        let rotation =
            renormalize(self.rotation * UnitQuaternion::from_scaled_axis(delta.rotation));
        Pose {
            rotation,
            translation: self.translation + delta.translation,
            timestamp: self.timestamp,
        }
    }

    /// Rotation angle (radians) between the two orientations.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }

    pub fn translation_distance_to(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.rotation.coords.iter().all(|v| v.is_finite())
    }
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

pub fn transform_point(pose: &Pose, p: &Vec3) -> Vec3 {
    pose.transform_point(p)
}

pub fn rotate_normal(pose: &Pose, n: &UnitVec3) -> UnitVec3 {
    pose.rotate_normal(n)
}

pub fn pose_compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn se3_retract(pose: &Pose, delta: &Twist) -> Pose {
    pose.retract(delta)
}

/// Eigen-decomposition of a symmetric 3×3 matrix, eigenvalues sorted descending.
///
/// Returned eigenvectors are the matching columns, orthonormal and right-handed.
pub fn symmetric_eigen_descending(m: &Matrix3<f64>) -> ([f64; 3], [UnitVec3; 3]) {
    let eig = SymmetricEigen::new(*m);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.map(|i| eig.eigenvalues[i]);
    let v0 = Unit::new_normalize(eig.eigenvectors.column(order[0]).into_owned());
    let v1 = Unit::new_normalize(eig.eigenvectors.column(order[1]).into_owned());
    let v2 = Unit::new_normalize(v0.cross(&v1));
    (values, [v0, v1, v2])
}

/// Angle between two unit vectors in degrees, via the clamped dot product.
pub fn angle_deg(a: &UnitVec3, b: &UnitVec3) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Skew-symmetric matrix `[v]×`.
pub fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn is_finite_vec(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}

/// Rectangular box rotated about the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrientedBox {
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
    /// Radians about +z.
    #[serde(default)]
    pub yaw: f64,
}

impl OrientedBox {
    pub fn new(center: Vec3, half_extents: Vec3, yaw: f64) -> Self {
        Self {
            center: center.into(),
            half_extents: half_extents.into(),
            yaw,
        }
    }

    pub fn center(&self) -> Vec3 {
        Vec3::from(self.center)
    }

    pub fn half(&self) -> Vec3 {
        Vec3::from(self.half_extents)
    }

    pub fn is_valid(&self) -> bool {
        self.half_extents.iter().all(|h| h.is_finite() && *h > 0.0)
            && self.center.iter().all(|c| c.is_finite())
            && self.yaw.is_finite()
    }

    /// Box frame to world frame.
    pub fn frame(&self) -> Pose {
        Pose::from_yaw(self.yaw, self.center())
    }

    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        self.frame().inverse().transform_point(p)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        let l = self.to_local(p);
        let h = self.half();
        (0..3).all(|i| l[i].abs() <= h[i])
    }

    /// Unsigned distance from `p` to the box boundary.
    pub fn surface_distance(&self, p: &Vec3) -> f64 {
        let l = self.to_local(p);
        let q = l.abs() - self.half();
        let outside = q.map(|v| v.max(0.0)).norm();
        if outside > 0.0 {
            outside
        } else {
            -q.max()
        }
    }

    /// Twice the smallest half-extent.
    pub fn thickness(&self) -> f64 {
        2.0 * self
            .half_extents
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// The eight corners, index bits (x, y, z) selecting +/- per axis.
    pub fn corners(&self) -> [Vec3; 8] {
        let f = self.frame();
        let h = self.half();
        std::array::from_fn(|i| {
            let s = |bit: usize| if i >> bit & 1 == 1 { 1.0 } else { -1.0 };
            f.transform_point(&Vec3::new(s(0) * h.x, s(1) * h.y, s(2) * h.z))
        })
    }

    pub fn translated(&self, offset: &Vec3) -> Self {
        Self::new(self.center() + offset, self.half(), self.yaw)
    }
}
