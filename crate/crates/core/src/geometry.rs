//! Rigid-body primitives shared by every other module.
//!
//! Lengths are millimeters and angles radians throughout.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(self.y * o.z - self.z * o.y, self.z * o.x - self.x * o.z, self.x * o.y - self.y * o.x)
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 1e-12 && n.is_finite() {
            Some(self * (1.0 / n))
        } else {
            None
        }
    }

    pub fn lerp(self, o: Vec3, t: f64) -> Vec3 {
        self + (o - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Horizontal (xy) part of the vector.
    pub fn horizontal(self) -> Vec3 {
        Vec3::new(self.x, self.y, 0.0)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Unit quaternion rotation, stored canonically with `w >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Default for Rotation {
    fn default() -> Self {
        Rotation::IDENTITY
    }
}

impl Rotation {
    pub const IDENTITY: Rotation = Rotation { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Builds a rotation from raw quaternion components, normalizing and
    /// canonicalizing the sign.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        let (w, x, y, z) = (w / n, x / n, y / n, z / n);
        if w < 0.0 {
            Rotation { w: -w, x: -x, y: -y, z: -z }
        } else {
            Rotation { w, x, y, z }
        }
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let Some(a) = axis.normalized() else {
            return Rotation::IDENTITY;
        };
        let (s, c) = (angle * 0.5).sin_cos();
        Rotation::from_quaternion(c, a.x * s, a.y * s, a.z * s)
    }

    pub fn about_x(angle: f64) -> Self {
        Rotation::from_axis_angle(Vec3::X, angle)
    }

    pub fn about_y(angle: f64) -> Self {
        Rotation::from_axis_angle(Vec3::Y, angle)
    }

    pub fn about_z(angle: f64) -> Self {
        Rotation::from_axis_angle(Vec3::Z, angle)
    }

    /// Rotation from a row-major 3x3 orthonormal matrix.
    pub fn from_matrix(m: &[[f64; 3]; 3]) -> Self {
        // Shepperd's method: pick the largest diagonal term for stability.
        let tr = m[0][0] + m[1][1] + m[2][2];
        if tr > m[0][0] && tr > m[1][1] && tr > m[2][2] {
            let s = (1.0 + tr).sqrt() * 2.0;
            Rotation::from_quaternion(
                0.25 * s,
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
            )
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            Rotation::from_quaternion(
                (m[2][1] - m[1][2]) / s,
                0.25 * s,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
            )
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            Rotation::from_quaternion(
                (m[0][2] - m[2][0]) / s,
                (m[0][1] + m[1][0]) / s,
                0.25 * s,
                (m[1][2] + m[2][1]) / s,
            )
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            Rotation::from_quaternion(
                (m[1][0] - m[0][1]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                0.25 * s,
            )
        }
    }

    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let Rotation { w, x, y, z } = *self;
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    pub fn quaternion(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn inverse(&self) -> Self {
        Rotation { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Hamilton product `self * other` (apply `other` first).
    pub fn compose(&self, o: &Rotation) -> Self {
        let (a, b) = (self, o);
        Rotation::from_quaternion(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Angle of the relative rotation between two orientations, in `[0, pi]`.
    pub fn angle_to(&self, o: &Rotation) -> f64 {
        // atan2 keeps precision for small angles, where acos does not.
        let r = self.inverse().compose(o);
        let v = (r.x * r.x + r.y * r.y + r.z * r.z).sqrt();
        2.0 * v.atan2(r.w.abs())
    }

    /// Spherical interpolation along the shortest arc.
    pub fn slerp(&self, o: &Rotation, t: f64) -> Rotation {
        let mut d = self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z;
        let mut b = *o;
        if d < 0.0 {
            d = -d;
            b = Rotation { w: -b.w, x: -b.x, y: -b.y, z: -b.z };
        }
        if d > 0.9995 {
            return Rotation::from_quaternion(
                self.w + (b.w - self.w) * t,
                self.x + (b.x - self.x) * t,
                self.y + (b.y - self.y) * t,
                self.z + (b.z - self.z) * t,
            );
        }
        let theta = d.acos();
        let s = theta.sin();
        let (ka, kb) = (((1.0 - t) * theta).sin() / s, (t * theta).sin() / s);
        Rotation::from_quaternion(
            self.w * ka + b.w * kb,
            self.x * ka + b.x * kb,
            self.y * ka + b.y * kb,
            self.z * ka + b.z * kb,
        )
    }
}

/// Rigid transform: rotate, then translate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Rotation,
}

impl Pose {
    pub const IDENTITY: Pose = Pose { position: Vec3::ZERO, orientation: Rotation::IDENTITY };

    pub fn new(position: Vec3, orientation: Rotation) -> Self {
        Pose { position, orientation }
    }

    pub fn from_translation(position: Vec3) -> Self {
        Pose { position, orientation: Rotation::IDENTITY }
    }

    pub fn inverse(&self) -> Pose {
        let r = self.orientation.inverse();
        Pose { position: -r.rotate(self.position), orientation: r }
    }

    /// Homogeneous 4x4 matrix, row-major.
    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        let r = self.orientation.to_matrix();
        let p = self.position;
        [
            [r[0][0], r[0][1], r[0][2], p.x],
            [r[1][0], r[1][1], r[1][2], p.y],
            [r[2][0], r[2][1], r[2][2], p.z],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn from_matrix(m: &[[f64; 4]; 4]) -> Pose {
        let r = [[m[0][0], m[0][1], m[0][2]], [m[1][0], m[1][1], m[1][2]], [m[2][0], m[2][1], m[2][2]]];
        Pose { position: Vec3::new(m[0][3], m[1][3], m[2][3]), orientation: Rotation::from_matrix(&r) }
    }
}

/// Rigid-body composition `a ∘ b`: the pose `b` expressed in `a`'s frame.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    Pose { position: a.position + a.orientation.rotate(b.position), orientation: a.orientation.compose(&b.orientation) }
}

pub fn transform_point(p: &Pose, v: Vec3) -> Vec3 {
    p.position + p.orientation.rotate(v)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}
