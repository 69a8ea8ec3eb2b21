//! Rotation helpers shared by the kinematic, gravity and calibration code.
//!
//! Euler angles everywhere in this crate use the intrinsic X-Y-Z sequence:
//! `R = Rx(a) * Ry(b) * Rz(c)`.

use nalgebra::{Matrix3, Rotation3, Vector3};
use std::f64::consts::PI;

pub fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotation matrix for intrinsic XYZ Euler angles.
pub fn euler_xyz(e: &Vector3<f64>) -> Matrix3<f64> {
    rot_x(e.x) * rot_y(e.y) * rot_z(e.z)
}

/// Inverse of [`euler_xyz`]. The middle angle is returned in `[-pi/2, pi/2]`.
pub fn euler_xyz_from_matrix(r: &Matrix3<f64>) -> Vector3<f64> {
    let b = r[(0, 2)].clamp(-1.0, 1.0).asin();
    let a = (-r[(1, 2)]).atan2(r[(2, 2)]);
    let c = (-r[(0, 1)]).atan2(r[(0, 0)]);
    Vector3::new(a, b, c)
}

/// Euler-rate axes of the intrinsic XYZ sequence, expressed in the parent frame.
///
/// Angular velocity of the child relative to the parent is
/// `axes[0] * da + axes[1] * db + axes[2] * dc`.
pub fn euler_xyz_axes(e: &Vector3<f64>) -> [Vector3<f64>; 3] {
    let rx = rot_x(e.x);
    let rxy = rx * rot_y(e.y);
    [Vector3::x(), rx * Vector3::y(), rxy * Vector3::z()]
}

/// Rotation angle of `r` in radians, in `[0, pi]`.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let v = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let cos = (r.trace() - 1.0) / 2.0;
    (v.norm() / 2.0).atan2(cos)
}

/// Geodesic distance between two rotations in radians.
pub fn geodesic_angle(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    rotation_angle(&(a.transpose() * b))
}

/// Rotation vector (axis times angle) of `r`.
pub fn rotation_log(r: &Matrix3<f64>) -> Vector3<f64> {
    Rotation3::from_matrix_unchecked(*r).scaled_axis()
}

/// Rotation of `angle` radians about unit `axis`.
pub fn axis_angle(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    Rotation3::from_scaled_axis(axis.normalize() * angle).into_inner()
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// True when `r` is orthonormal with determinant +1 within `tol`.
pub fn is_rotation(r: &Matrix3<f64>, tol: f64) -> bool {
    let err = (r.transpose() * r - Matrix3::identity()).abs().max();
    err <= tol && (r.determinant() - 1.0).abs() <= tol
}

/// Projects a near-rotation back onto SO(3).
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    Rotation3::from_matrix(r).into_inner()
}

/// Unit vector along the world axis least aligned with `v`.
pub fn most_orthogonal_axis(v: &Vector3<f64>) -> Vector3<f64> {
    let a = v.abs();
    if a.x <= a.y && a.x <= a.z {
        Vector3::x()
    } else if a.y <= a.z {
        Vector3::y()
    } else {
        Vector3::z()
    }
}

/// An orthonormal pair spanning the plane perpendicular to unit `n`.
pub fn tangent_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let t1 = n.cross(&most_orthogonal_axis(n)).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}
