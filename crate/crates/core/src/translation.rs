//! Gravity-decomposed root velocity and its stationary-joint refinement.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::skeleton::{Endpoint, SkeletonModel};

/// Per-frame output of the (external) pose and translation estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorFrame {
    pub timestamp: f64,
    /// Euler angles of every joint, root orientation first (length 3k).
    pub theta_ref: Vec<f64>,
    /// Signed speed along the world gravity direction [m/s].
    pub v_par_mag: f64,
    /// Velocity component perpendicular to gravity [m/s].
    pub v_perp: Vector3<f64>,
    /// Stationary probabilities, ordered as [`Endpoint::ALL`].
    pub stationary: [f64; 5],
    /// Refined gravity direction in the root frame, when the estimator provides one.
    pub g_root: Option<Vector3<f64>>,
}

impl EstimatorFrame {
    pub fn validate(&self, model: &SkeletonModel) -> Result<()> {
        if self.theta_ref.len() != 3 * model.joint_count() {
            return Err(Error::dim("theta_ref", 3 * model.joint_count(), self.theta_ref.len()));
        }
        if let Some(p) = self.stationary.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Config(format!("stationary probability {p} outside [0, 1]")));
        }
        let finite = self.theta_ref.iter().all(|v| v.is_finite())
            && self.v_par_mag.is_finite()
            && self.v_perp.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Numerical("estimator frame has non-finite values".into()));
        }
        Ok(())
    }

    pub fn stationary_of(&self, e: Endpoint) -> f64 {
        self.stationary[e.index()]
    }
}

/// `v = v∥ ĝ + v⊥`, with `v⊥` first projected perpendicular to `ĝ`.
pub fn assemble_velocity(v_par_mag: f64, v_perp: &Vector3<f64>, g_world: &Vector3<f64>) -> Vector3<f64> {
    let g = g_world.normalize();
    let perp = v_perp - g * g.dot(v_perp);
    g * v_par_mag + perp
}

/// Splits a velocity into its signed gravity-aligned magnitude and perpendicular part.
pub fn decompose_velocity(v: &Vector3<f64>, g_world: &Vector3<f64>) -> (f64, Vector3<f64>) {
    let g = g_world.normalize();
    let par = g.dot(v);
    (par, v - g * par)
}

/// Root-relative positions of the five endpoints for a set of joint angles.
pub fn endpoint_offsets(model: &SkeletonModel, theta: &[f64]) -> Result<[Vector3<f64>; 5]> {
    let pose = model.pose_from_parts(&Vector3::zeros(), theta)?;
    Ok(model.endpoint_joints().map(|j| pose.positions[j]))
}

/// Closed-form minimizer of
/// `|ṽ - v|² + Σ sᵢ / dt² |FKᵢ(θ_t) + ṽ dt - FKᵢ(θ_{t-1})|²`
/// where `FKᵢ` is the root-relative endpoint position.
pub fn refine_velocity(
    model: &SkeletonModel,
    theta_t: &[f64],
    theta_prev: &[f64],
    v: &Vector3<f64>,
    s: &[f64; 5],
    dt: f64,
) -> Result<Vector3<f64>> {
    if dt <= 0.0 {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let cur = endpoint_offsets(model, theta_t)?;
    let prev = endpoint_offsets(model, theta_prev)?;
    Ok(refine_velocity_from_offsets(&cur, &prev, v, s, dt))
}

pub fn refine_velocity_from_offsets(
    cur: &[Vector3<f64>; 5],
    prev: &[Vector3<f64>; 5],
    v: &Vector3<f64>,
    s: &[f64; 5],
    dt: f64,
) -> Vector3<f64> {
    let denom = 1.0 + s.iter().sum::<f64>();
    let pull: Vector3<f64> = (0..5).map(|i| (prev[i] - cur[i]) * s[i]).sum();
    v / denom + pull / (denom * dt)
}

/// Value of the stationary-refinement objective at candidate `v_tilde`.
pub fn refinement_objective(
    cur: &[Vector3<f64>; 5],
    prev: &[Vector3<f64>; 5],
    v: &Vector3<f64>,
    s: &[f64; 5],
    dt: f64,
    v_tilde: &Vector3<f64>,
) -> f64 {
    let data = (v_tilde - v).norm_squared();
    let stat: f64 = (0..5)
        .map(|i| s[i] / (dt * dt) * (cur[i] + v_tilde * dt - prev[i]).norm_squared())
        .sum();
    data + stat
}
