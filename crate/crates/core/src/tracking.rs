//! Dual PD targets, pre-/re-tracking least squares and state integration.

use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::dynamics::DynamicsModel;
use crate::error::{Error, Result};
use crate::math::wrap_angle;
use crate::skeleton::{stack, CharacterState, Pose, SkeletonModel};
use crate::solver::{solve_least_squares, CsrMatrix, LsqrOptions};

pub const DEFAULT_DT: f64 = 1.0 / 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    pub kp_theta: f64,
    pub kd_theta: f64,
    pub kp_r: f64,
    pub kd_r: f64,
    pub beta_tau: f64,
    pub beta_tau_star: f64,
    pub dt: f64,
    /// Contact joints closer than this to their surface are pulled down [m].
    pub d_th: f64,
    /// Fraction of the surface gap removed per frame.
    pub pull_factor: f64,
    pub lsqr_tolerance: f64,
    /// `None` means ten times the DOF count.
    pub lsqr_max_iter: Option<usize>,
    pub integrator: Integrator,
}

/// Update order of the per-frame state integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// `q̇ += q̈ dt`, then `q += q̇ dt`. With `kp = 1/dt²` and `kd = 1/dt`
    /// a constant target is reached in one frame.
    VelocityFirst,
    /// `q += q̇ dt` with the old velocity, then `q̇ += q̈ dt`. With the same
    /// gains the tracking error obeys `e'' = e' - e` and never decays.
    PositionFirst,
}

impl TrackingConfig {
    /// Defaults with the torque regularizer scaled for a character of `mass` kg.
    pub fn for_mass(mass: f64) -> Self {
        let beta_tau = 1e-3 / mass;
        TrackingConfig {
            kp_theta: 3600.0,
            kd_theta: 60.0,
            kp_r: 3600.0,
            kd_r: 60.0,
            beta_tau,
            beta_tau_star: 3.0 * beta_tau,
            dt: DEFAULT_DT,
            d_th: 0.15,
            pull_factor: 0.1,
            lsqr_tolerance: 1e-10,
            lsqr_max_iter: None,
            integrator: Integrator::VelocityFirst,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("kp_theta", self.kp_theta),
            ("kd_theta", self.kd_theta),
            ("kp_r", self.kp_r),
            ("kd_r", self.kd_r),
            ("beta_tau", self.beta_tau),
            ("beta_tau_star", self.beta_tau_star),
            ("dt", self.dt),
            ("d_th", self.d_th),
            ("lsqr_tolerance", self.lsqr_tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.pull_factor) {
            return Err(Error::Config(format!("pull_factor must lie in [0, 1], got {}", self.pull_factor)));
        }
        Ok(())
    }

    pub fn lsqr_options(&self) -> LsqrOptions {
        LsqrOptions {
            max_iter: self.lsqr_max_iter,
            ..LsqrOptions::with_tolerance(self.lsqr_tolerance)
        }
    }
}

impl Default for TrackingConfig {
    fn default() -> Self {
        TrackingConfig::for_mass(80.0)
    }
}

/// Configuration-dependent quantities shared by both tracking passes of a frame.
#[derive(Debug, Clone)]
pub struct FrameDynamics {
    pub pose: Pose,
    pub mass: DMatrix<f64>,
    pub bias: DVector<f64>,
    /// Stacked joint-position Jacobian (3k × n).
    pub jacobian: DMatrix<f64>,
    pub jdot_qdot: DVector<f64>,
    /// Joint linear velocities `J q̇`.
    pub rdot: Vec<Vector3<f64>>,
}

impl FrameDynamics {
    pub fn new(model: &DynamicsModel, state: &CharacterState) -> Result<Self> {
        let sk = &model.skeleton;
        state.validate(sk)?;
        let pose = sk.pose(&state.q)?;
        let mass = model.mass_matrix_from_pose(&pose);
        let bias = model.bias_forces_from_pose(&pose, &state.qdot);
        let jacobian = sk.jacobian_from_pose(&pose);
        let motion = sk.joint_motion(&pose, &state.qdot, None);
        let jdot_qdot = stack(motion.iter().map(|m| m.acc));
        let rdot = motion.iter().map(|m| m.vel).collect();
        Ok(FrameDynamics {
            pose,
            mass,
            bias,
            jacobian,
            jdot_qdot,
            rdot,
        })
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.pose.positions
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingOutput {
    pub qddot: DVector<f64>,
    pub tau: DVector<f64>,
    pub iterations: usize,
}

impl TrackingOutput {
    /// Root residual force and torque, `τ[0..6]`.
    pub fn residual_root(&self) -> Vector6<f64> {
        self.tau.fixed_rows::<6>(0).into_owned()
    }
}

/// Kinematic position targets for every joint.
///
/// Joints are placed by forward kinematics of `theta_ref` around the advanced
/// root `p + ṽ dt`; each endpoint is then blended toward its current position
/// by its stationary probability.
pub fn build_reference(
    model: &SkeletonModel,
    theta_ref: &[f64],
    p_current: &Vector3<f64>,
    v_refined: &Vector3<f64>,
    r_current: &[Vector3<f64>],
    s: &[f64; 5],
    dt: f64,
) -> Result<Vec<Vector3<f64>>> {
    if r_current.len() != model.joint_count() {
        return Err(Error::dim("current joint positions", model.joint_count(), r_current.len()));
    }
    let root = p_current + v_refined * dt;
    let mut r_ref = model.pose_from_parts(&root, theta_ref)?.positions;
    for (e, &j) in model.endpoint_joints().iter().enumerate() {
        let t = s[e];
        r_ref[j] = r_ref[j] * (1.0 - t) + r_current[j] * t;
    }
    Ok(r_ref)
}

/// Desired Euler-angle accelerations; angle errors are wrapped to `(-π, π]`.
pub fn angular_pd(config: &TrackingConfig, theta_ref: &[f64], q: &DVector<f64>, qdot: &DVector<f64>) -> Result<DVector<f64>> {
    let n = q.len();
    if theta_ref.len() + 3 != n {
        return Err(Error::dim("theta_ref", n.saturating_sub(3), theta_ref.len()));
    }
    Ok(DVector::from_fn(n - 3, |i, _| {
        config.kp_theta * wrap_angle(theta_ref[i] - q[i + 3]) - config.kd_theta * qdot[i + 3]
    }))
}

/// Desired joint linear accelerations, stacked (3k).
pub fn linear_pd(config: &TrackingConfig, r_ref: &[Vector3<f64>], r: &[Vector3<f64>], rdot: &[Vector3<f64>]) -> Result<DVector<f64>> {
    if r_ref.len() != r.len() || rdot.len() != r.len() {
        return Err(Error::dim("joint position targets", r.len(), r_ref.len().min(rdot.len())));
    }
    Ok(stack(
        (0..r.len()).map(|i| (r_ref[i] - r[i]) * config.kp_r - rdot[i] * config.kd_r),
    ))
}

pub fn dual_pd(
    config: &TrackingConfig,
    theta_ref: &[f64],
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    r_ref: &[Vector3<f64>],
    r: &[Vector3<f64>],
    rdot: &[Vector3<f64>],
) -> Result<(DVector<f64>, DVector<f64>)> {
    Ok((angular_pd(config, theta_ref, q, qdot)?, linear_pd(config, r_ref, r, rdot)?))
}

/// Stacked sparse system `[A; J; √β M] q̈ ≈ [θ̈; r̈ - J̇q̇; √β (Jcᵀλ - h)]`.
pub fn tracking_system(
    frame: &FrameDynamics,
    theta_ddot_des: &DVector<f64>,
    r_ddot_des: &DVector<f64>,
    beta: f64,
    contact_wrench: Option<&DVector<f64>>,
) -> Result<(CsrMatrix, DVector<f64>)> {
    let n = frame.mass.nrows();
    let nr = frame.jacobian.nrows();
    if theta_ddot_des.len() != n - 3 {
        return Err(Error::dim("desired angular accelerations", n - 3, theta_ddot_des.len()));
    }
    if r_ddot_des.len() != nr {
        return Err(Error::dim("desired linear accelerations", nr, r_ddot_des.len()));
    }
    let sb = beta.sqrt();
    let rows = (n - 3) + nr + n;
    let mut a = CsrMatrix::with_capacity(n, rows, (n - 3) + nr * n / 2 + n * n);
    for i in 3..n {
        a.push_row([(i, 1.0)]);
    }
    a.push_dense(&frame.jacobian, 1.0);
    a.push_dense(&frame.mass, sb);

    let mut b = DVector::zeros(rows);
    b.rows_mut(0, n - 3).copy_from(theta_ddot_des);
    b.rows_mut(n - 3, nr).copy_from(&(r_ddot_des - &frame.jdot_qdot));
    let mut tail = -&frame.bias;
    if let Some(w) = contact_wrench {
        if w.len() != n {
            return Err(Error::dim("contact generalized force", n, w.len()));
        }
        tail += w;
    }
    b.rows_mut(n - 3 + nr, n).copy_from(&(tail * sb));
    Ok((a, b))
}

fn solve(
    frame: &FrameDynamics,
    config: &TrackingConfig,
    theta_ddot_des: &DVector<f64>,
    r_ddot_des: &DVector<f64>,
    beta: f64,
    contact_wrench: Option<&DVector<f64>>,
) -> Result<TrackingOutput> {
    let (a, b) = tracking_system(frame, theta_ddot_des, r_ddot_des, beta, contact_wrench)?;
    let res = solve_least_squares(&a, &b, &config.lsqr_options())?;
    let qddot = res.x;
    let mut tau = &frame.mass * &qddot + &frame.bias;
    if let Some(w) = contact_wrench {
        tau -= w;
    }
    if !tau.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("tracking produced non-finite forces".into()));
    }
    Ok(TrackingOutput {
        qddot,
        tau,
        iterations: res.iterations,
    })
}

/// Contact-free tracking; `τ = M q̈ + h`.
pub fn pretrack(
    frame: &FrameDynamics,
    config: &TrackingConfig,
    theta_ddot_des: &DVector<f64>,
    r_ddot_des: &DVector<f64>,
) -> Result<TrackingOutput> {
    solve(frame, config, theta_ddot_des, r_ddot_des, config.beta_tau, None)
}

/// Tracking with known contact forces; `τ* = M q̈* + h - Jcᵀλ`.
///
/// `contact_jacobian` stacks the 3×n point Jacobians of the contact joints in
/// the same order as `lambda`.
pub fn retrack(
    frame: &FrameDynamics,
    config: &TrackingConfig,
    theta_ddot_des: &DVector<f64>,
    r_ddot_des_star: &DVector<f64>,
    lambda: &DVector<f64>,
    contact_jacobian: &DMatrix<f64>,
) -> Result<TrackingOutput> {
    if contact_jacobian.nrows() != lambda.len() {
        return Err(Error::dim("contact forces", contact_jacobian.nrows(), lambda.len()));
    }
    let wrench = contact_jacobian.transpose() * lambda;
    solve(frame, config, theta_ddot_des, r_ddot_des_star, config.beta_tau_star, Some(&wrench))
}

/// Position first with the old velocity, then velocity.
pub fn integrate(state: &CharacterState, qddot: &DVector<f64>, dt: f64) -> Result<CharacterState> {
    integrate_with(Integrator::PositionFirst, state, qddot, dt)
}

pub fn integrate_with(scheme: Integrator, state: &CharacterState, qddot: &DVector<f64>, dt: f64) -> Result<CharacterState> {
    if dt <= 0.0 {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    if qddot.len() != state.q.len() {
        return Err(Error::dim("qddot", state.q.len(), qddot.len()));
    }
    let qdot = &state.qdot + qddot * dt;
    let q = match scheme {
        Integrator::PositionFirst => &state.q + &state.qdot * dt,
        Integrator::VelocityFirst => &state.q + &qdot * dt,
    };
    Ok(CharacterState { q, qdot })
}
