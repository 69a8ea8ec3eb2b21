//! Root-frame gravity and minimal-angle orientation correction.

use log::warn;
use nalgebra::{Matrix3, Vector3};

use crate::math::{axis_angle, most_orthogonal_axis};

/// A root orientation together with the gravity direction seen from the root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationSample {
    pub r_root: Matrix3<f64>,
    pub g_root: Vector3<f64>,
}

impl OrientationSample {
    pub fn new(r_root: Matrix3<f64>, g_world: &Vector3<f64>) -> Self {
        OrientationSample {
            r_root,
            g_root: root_frame_gravity(&r_root, g_world),
        }
    }
}

fn unit_or_warn(v: &Vector3<f64>, what: &str) -> Vector3<f64> {
    let n = v.norm();
    if (n - 1.0).abs() > 1e-6 {
        warn!("{what} is not unit length (|v| = {n}); normalizing");
    }
    v / n
}

/// Gravity direction expressed in the root frame, `R_rootᵀ g_world`.
pub fn root_frame_gravity(r_root: &Matrix3<f64>, g_world: &Vector3<f64>) -> Vector3<f64> {
    let g = unit_or_warn(g_world, "world gravity direction");
    r_root.transpose() * g
}

/// Rotation taking unit `from` onto unit `to` through the smallest angle.
///
/// Antiparallel inputs rotate by π about the world axis most orthogonal to
/// `from` (projected to be perpendicular to it).
pub fn minimal_rotation(from: &Vector3<f64>, to: &Vector3<f64>) -> Matrix3<f64> {
    let a = unit_or_warn(from, "rotation source");
    let b = unit_or_warn(to, "rotation target");
    let c = a.dot(&b).clamp(-1.0, 1.0);
    if c < -1.0 + 1e-8 {
        let ref_axis = most_orthogonal_axis(&a);
        let axis = (ref_axis - a * a.dot(&ref_axis)).normalize();
        return axis_angle(&axis, std::f64::consts::PI);
    }
    let axis = a.cross(&b);
    let s = axis.norm();
    if s < 1e-15 {
        return Matrix3::identity();
    }
    axis_angle(&(axis / s), s.atan2(c))
}

/// Refines a root orientation so that its gravity reading becomes `g_refined`.
///
/// `g_prev` is the root-frame gravity implied by `r_prev`. Returns
/// `r_prev * R{g_refined -> g_prev}`; the heading about the world gravity axis
/// is left untouched.
pub fn correct_root_orientation(
    r_prev: &Matrix3<f64>,
    g_refined: &Vector3<f64>,
    g_prev: &Vector3<f64>,
) -> Matrix3<f64> {
    r_prev * minimal_rotation(g_refined, g_prev)
}

/// Re-expresses a root-relative vector measured under `r_old` in the frame `r_new`.
pub fn reexpress_in_root(r_old: &Matrix3<f64>, r_new: &Matrix3<f64>, v_root_old: &Vector3<f64>) -> Vector3<f64> {
    r_new.transpose() * (r_old * v_root_old)
}
