//! Spherical coordinates and the axis-angle rotation used to steer the array.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Cartesian vector in meters (or newtons when used as a force).
pub type Vec3 = Vector3<f64>;
/// 3x3 matrix, row-major semantics as in nalgebra.
pub type Mat3 = Matrix3<f64>;

const UNIT_TOL: f64 = 1e-9;
const ANTIPARALLEL_TOL: f64 = 1e-12;

/// Polar angle `theta` in `[0, pi]` measured from +z, azimuth `phi` in `(-pi, pi]` from +x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphDirection {
    pub theta: f64,
    pub phi: f64,
}

impl SphDirection {
    /// Builds a direction, wrapping `phi` into `(-pi, pi]`. Poles get `phi = 0`.
    pub fn new(theta: f64, phi: f64) -> Self {
        let theta = theta.clamp(0.0, PI);
        let phi = if theta == 0.0 || theta == PI {
            0.0
        } else {
            wrap_angle(phi)
        };
        Self { theta, phi }
    }

    pub fn unit_vector(&self) -> Vec3 {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        Vec3::new(st * cp, st * sp, ct)
    }

    /// Direction of a non-zero vector.
    pub fn from_vector(v: &Vec3) -> Result<Self> {
        let r = v.norm();
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::DegenerateDirection);
        }
        let theta = (v.z / r).clamp(-1.0, 1.0).acos();
        let rho = v.x.hypot(v.y);
        let phi = if rho <= r * 1e-15 { 0.0 } else { v.y.atan2(v.x) };
        Ok(Self::new(theta, phi))
    }

    /// Cosine of the angle to the array axis (+x): `sin(theta) cos(phi)`.
    pub fn axis_cosine(&self) -> f64 {
        self.theta.sin() * self.phi.cos()
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Range and direction of `p` as seen from `origin`.
///
/// The azimuth is resolved over the full circle (atan2), not the two-valued
/// arcsine form, so users behind the array are not mirrored.
pub fn cart_to_sph(p: &Vec3, origin: &Vec3) -> Result<(f64, SphDirection)> {
    let rel = p - origin;
    let r = rel.norm();
    if r == 0.0 {
        return Err(Error::DegenerateDirection);
    }
    Ok((r, SphDirection::from_vector(&rel)?))
}

pub fn sph_to_cart(r: f64, dir: &SphDirection, origin: &Vec3) -> Vec3 {
    origin + dir.unit_vector() * r
}

/// Rotation matrix taking the unit vector `from` onto the unit vector `to`.
///
/// Rodrigues form about the normalized axis `from x to` by the angle
/// `acos(from . to)`. Inputs closer than 1e-12 to anti-parallel rotate by
/// pi about `from x e`, where `e` is +x unless `from` is within ~25 deg of
/// the x-axis, in which case `e` is +y.
pub fn rotation_between(from: &Vec3, to: &Vec3) -> Result<Mat3> {
    for v in [from, to] {
        if !v.iter().all(|c| c.is_finite()) || (v.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidInput(
                "rotation_between expects unit vectors".into(),
            ));
        }
    }
    let from = from.normalize();
    let to = to.normalize();
    let cos_w = from.dot(&to).clamp(-1.0, 1.0);
    let cross = from.cross(&to);
    let sin_w = cross.norm();

    if cos_w <= -1.0 + ANTIPARALLEL_TOL {
        let helper = if from.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let axis = from.cross(&helper).normalize();
        return Ok(axis_angle_matrix(&axis, -1.0, 0.0));
    }
    if sin_w < 1e-15 {
        return Ok(Mat3::identity());
    }
    Ok(axis_angle_matrix(&(cross / sin_w), cos_w, sin_w))
}

/// Rodrigues matrix for a unit axis with the rotation angle given by its cosine and sine.
pub fn axis_angle_matrix(axis: &Vec3, cos_w: f64, sin_w: f64) -> Mat3 {
    let (ax, ay, az) = (axis.x, axis.y, axis.z);
    let c1 = 1.0 - cos_w;
    Mat3::new(
        ax * ax * c1 + cos_w,
        ax * ay * c1 - az * sin_w,
        ax * az * c1 + ay * sin_w,
        ax * ay * c1 + az * sin_w,
        ay * ay * c1 + cos_w,
        ay * az * c1 - ax * sin_w,
        ax * az * c1 - ay * sin_w,
        ay * az * c1 + ax * sin_w,
        az * az * c1 + cos_w,
    )
}
