//! Quaternion and rotation-matrix algebra.
//!
//! Quaternions are Hamilton, scalar first `(w, x, y, z)`, and represent the
//! rotation from the body frame into the navigation frame: `v_nav = R(q) v_body`.

use core::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Inputs with a norm below this are rejected by [`UnitQuaternion::from_vector`].
pub const MIN_QUATERNION_NORM: f64 = 1e-12;

/// Unit quaternion in scalar-first Hamilton convention.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(into = "[f64; 4]", try_from = "[f64; 4]")
)]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl UnitQuaternion {
    pub const IDENTITY: Self = Self {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn identity() -> Self {
        Self::IDENTITY
    }

    /// Normalizes `(w, x, y, z)` into a unit quaternion.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        if !(w.is_finite() && x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::InvalidArgument(alloc::format!(
                "non-finite quaternion component in ({w}, {x}, {y}, {z})"
            )));
        }
        let n2 = w * w + x * x + y * y + z * z;
        // already unit to rounding: keep the bits so normalization is idempotent
        if (n2 - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Ok(Self { w, x, y, z });
        }
        let norm = n2.sqrt();
        if norm < MIN_QUATERNION_NORM {
            return Err(Error::DegenerateQuaternion { norm });
        }
        Ok(Self {
            w: w / norm,
            x: x / norm,
            y: y / norm,
            z: z / norm,
        })
    }

    /// Normalizes a raw 4-vector `[w, x, y, z]`.
    pub fn from_vector(v: &Vector4<f64>) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn from_array(q: [f64; 4]) -> Result<Self> {
        Self::new(q[0], q[1], q[2], q[3])
    }

    /// Rotation of `angle` radians about `axis`. A zero axis gives the identity.
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || !n.is_finite() {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis / n;
        Self::renormalized(c, a.x * s, a.y * s, a.z * s)
    }

    /// Exponential map: rotation about `rv` by `|rv|` radians.
    pub fn from_rotation_vector(rv: &Vec3) -> Self {
        let angle = rv.norm();
        if angle < 1e-12 {
            // second-order series keeps the map smooth through zero
            return Self::renormalized(1.0 - angle * angle / 8.0, 0.5 * rv.x, 0.5 * rv.y, 0.5 * rv.z);
        }
        Self::from_axis_angle(rv, angle)
    }

    /// Z-Y-X (yaw, pitch, roll) composition: `q = q_z(yaw) ⊗ q_y(pitch) ⊗ q_x(roll)`.
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64) -> Self {
        let (sr, cr) = (0.5 * roll).sin_cos();
        let (sp, cp) = (0.5 * pitch).sin_cos();
        let (sy, cy) = (0.5 * yaw).sin_cos();
        Self::renormalized(
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        )
    }

    pub fn from_yaw(yaw: f64) -> Self {
        let (s, c) = (0.5 * yaw).sin_cos();
        Self {
            w: c,
            x: 0.0,
            y: 0.0,
            z: s,
        }
    }

    /// Shepperd's method; the result has a non-negative scalar part.
    pub fn from_rotation_matrix(m: &Mat3) -> Self {
        let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let (w, x, y, z);
        if trace > 0.0 {
            let s = 2.0 * (trace + 1.0).sqrt();
            w = 0.25 * s;
            x = (m[(2, 1)] - m[(1, 2)]) / s;
            y = (m[(0, 2)] - m[(2, 0)]) / s;
            z = (m[(1, 0)] - m[(0, 1)]) / s;
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = 2.0 * (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt();
            w = (m[(2, 1)] - m[(1, 2)]) / s;
            x = 0.25 * s;
            y = (m[(0, 1)] + m[(1, 0)]) / s;
            z = (m[(0, 2)] + m[(2, 0)]) / s;
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = 2.0 * (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt();
            w = (m[(0, 2)] - m[(2, 0)]) / s;
            x = (m[(0, 1)] + m[(1, 0)]) / s;
            y = 0.25 * s;
            z = (m[(1, 2)] + m[(2, 1)]) / s;
        } else {
            let s = 2.0 * (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt();
            w = (m[(1, 0)] - m[(0, 1)]) / s;
            x = (m[(0, 2)] + m[(2, 0)]) / s;
            y = (m[(1, 2)] + m[(2, 1)]) / s;
            z = 0.25 * s;
        }
        let q = Self::renormalized(w, x, y, z);
        if q.w < 0.0 {
            q.negated()
        } else {
            q
        }
    }

    // Only for inputs already known to be finite and close to unit norm.
    fn renormalized(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        Self {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        }
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.w, self.x, self.y, self.z)
    }

    pub fn vector_part(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn conjugate(&self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Same as [`conjugate`](Self::conjugate) for unit quaternions.
    pub fn inverse(&self) -> Self {
        self.conjugate()
    }

    pub fn negated(&self) -> Self {
        Self {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Returns `self` or `-self`, whichever lies in the hemisphere of `reference`.
    pub fn aligned_with(&self, reference: &Self) -> Self {
        if self.dot(reference) < 0.0 {
            self.negated()
        } else {
            *self
        }
    }

    pub fn to_rotation_matrix(&self) -> Mat3 {
        let Self { w, x, y, z } = *self;
        Mat3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// `R(q) v`, i.e. body-frame vector expressed in the navigation frame.
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.to_rotation_matrix() * v
    }

    /// Logarithm map onto the shortest rotation vector (angle in `[0, π]`).
    pub fn to_rotation_vector(&self) -> Vec3 {
        let q = if self.w < 0.0 { self.negated() } else { *self };
        let v = q.vector_part();
        let s = v.norm();
        if s < 1e-12 {
            return v * 2.0;
        }
        let angle = 2.0 * s.atan2(q.w);
        v * (angle / s)
    }

    /// Rotation angle between two orientations, `2·acos(|a·b|)`, in `[0, π]`.
    pub fn angular_distance(&self, other: &Self) -> f64 {
        // atan2 form of 2·acos(|dot|); well conditioned for small angles
        let rel = self.conjugate() * *other;
        2.0 * rel.vector_part().norm().atan2(rel.w.abs())
    }

    pub fn yaw(&self) -> f64 {
        let Self { w, x, y, z } = *self;
        (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z))
    }

    /// `(roll, pitch, yaw)` for the Z-Y-X convention of [`from_euler`](Self::from_euler).
    pub fn euler_angles(&self) -> (f64, f64, f64) {
        let Self { w, x, y, z } = *self;
        let roll = (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y));
        let pitch = (2.0 * (w * y - x * z)).clamp(-1.0, 1.0).asin();
        (roll, pitch, self.yaw())
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;

    /// Hamilton product, renormalized.
    fn mul(self, rhs: Self) -> Self {
        let [w, x, y, z] = hamilton_product(&self.to_array(), &rhs.to_array());
        Self::renormalized(w, x, y, z)
    }
}

impl From<UnitQuaternion> for [f64; 4] {
    fn from(q: UnitQuaternion) -> Self {
        q.to_array()
    }
}

impl TryFrom<[f64; 4]> for UnitQuaternion {
    type Error = Error;

    fn try_from(q: [f64; 4]) -> Result<Self> {
        Self::from_array(q)
    }
}

/// Hamilton product of two raw (not necessarily unit) quaternions.
pub fn hamilton_product(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    let [aw, ax, ay, az] = *a;
    let [bw, bx, by, bz] = *b;
    [
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ]
}

/// Matrix `L(a)` with `a ⊗ b = L(a) b`.
pub fn left_product_matrix(a: &[f64; 4]) -> Matrix4<f64> {
    let [w, x, y, z] = *a;
    Matrix4::new(
        w, -x, -y, -z, //
        x, w, -z, y, //
        y, z, w, -x, //
        z, -y, x, w,
    )
}

/// Matrix `R(b)` with `a ⊗ b = R(b) a`.
pub fn right_product_matrix(b: &[f64; 4]) -> Matrix4<f64> {
    let [w, x, y, z] = *b;
    Matrix4::new(
        w, -x, -y, -z, //
        x, w, z, -y, //
        y, -z, w, x, //
        z, y, -x, w,
    )
}

/// Cross-product matrix: `skew(a) b = a × b`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn so3_exp(rv: &Vec3) -> Mat3 {
    UnitQuaternion::from_rotation_vector(rv).to_rotation_matrix()
}

pub fn so3_log(m: &Mat3) -> Vec3 {
    UnitQuaternion::from_rotation_matrix(m).to_rotation_vector()
}

/// Left Jacobian of SO(3).
pub fn so3_left_jacobian(rv: &Vec3) -> Mat3 {
    let theta = rv.norm();
    let k = skew(rv);
    if theta < 1e-6 {
        return Mat3::identity() + k * 0.5 + k * k / 6.0;
    }
    let t2 = theta * theta;
    Mat3::identity() + k * ((1.0 - theta.cos()) / t2) + k * k * ((theta - theta.sin()) / (t2 * theta))
}

/// Flips signs along a sequence so that consecutive quaternions have a
/// non-negative dot product. Returns the number of flipped entries.
pub fn enforce_hemisphere_continuity(seq: &mut [UnitQuaternion]) -> usize {
    let mut flips = 0;
    for i in 1..seq.len() {
        if seq[i].dot(&seq[i - 1]) < 0.0 {
            seq[i] = seq[i].negated();
            flips += 1;
        }
    }
    flips
}
