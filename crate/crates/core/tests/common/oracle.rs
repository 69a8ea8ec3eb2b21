//! Independent reference solutions shared by the integration and acceptance tests.

use super::*;
use imuphys::math::tangent_basis;
use imuphys::skeleton::Pose;
use imuphys::tracking::{FrameDynamics, TrackingConfig};
use imuphys::{CharacterState, DynamicsModel, SkeletonModel};
use imuphys::skeleton::stack;
use nalgebra::{DMatrix, DVector, Matrix3, Vector3, Vector6};

/// Newton iterations with a central-difference gradient and Hessian of the
/// objective.
pub fn numeric_argmin(f: impl Fn(&Vector3<f64>) -> f64) -> Vector3<f64> {
    let mut x = Vector3::zeros();
    let h = 1e-3;
    for _ in 0..4 {
        let grad = |x: &Vector3<f64>| {
            Vector3::from_fn(|i, _| {
                let e = Vector3::ith(i, h);
                (f(&(x + e)) - f(&(x - e))) / (2.0 * h)
            })
        };
        let g0 = grad(&x);
        let hess = Matrix3::from_fn(|i, j| {
            let e = Vector3::ith(j, h);
            (grad(&(x + e))[i] - grad(&(x - e))[i]) / (2.0 * h)
        });
        let hess = (hess + hess.transpose()) * 0.5;
        x -= hess.try_inverse().unwrap() * g0;
    }
    x
}

pub struct Problem {
    pub model: DynamicsModel,
    pub frame: FrameDynamics,
    pub config: TrackingConfig,
    pub theta_dd: DVector<f64>,
    pub r_dd: DVector<f64>,
}

pub fn problem(seed: u64, skeleton: SkeletonModel) -> Problem {
    let mut r = rng(seed);
    let model = DynamicsModel::new(skeleton);
    let n = model.dof();
    let state = CharacterState::new(&model.skeleton, random_q(&model.skeleton, &mut r), random_vec(n, &mut r, 2.0)).unwrap();
    let frame = FrameDynamics::new(&model, &state).unwrap();
    let config = TrackingConfig::for_mass(model.total_mass());
    let theta_dd = random_vec(n - 3, &mut r, 50.0);
    let r_dd = random_vec(3 * model.skeleton.joint_count(), &mut r, 20.0);
    Problem { model, frame, config, theta_dd, r_dd }
}

/// `[S; J; √β M] x ≈ [θ̈; r̈ - J̇q̇; √β w]` assembled densely and solved by SVD.
pub fn dense_oracle(p: &Problem, beta: f64, w: &DVector<f64>) -> DVector<f64> {
    let n = p.model.dof();
    let nr = p.frame.jacobian.nrows();
    let rows = (n - 3) + nr + n;
    let mut a = DMatrix::zeros(rows, n);
    for i in 0..n - 3 {
        a[(i, i + 3)] = 1.0;
    }
    a.view_mut((n - 3, 0), (nr, n)).copy_from(&p.frame.jacobian);
    a.view_mut((n - 3 + nr, 0), (n, n)).copy_from(&(&p.frame.mass * beta.sqrt()));
    let mut b = DVector::zeros(rows);
    b.rows_mut(0, n - 3).copy_from(&p.theta_dd);
    b.rows_mut(n - 3, nr).copy_from(&(&p.r_dd - &p.frame.jdot_qdot));
    b.rows_mut(n - 3 + nr, n).copy_from(&(w * beta.sqrt()));
    a.svd(true, true).solve(&b, 1e-14).unwrap()
}

pub fn relative(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

pub fn contact_inputs(p: &Problem, seed: u64) -> (DVector<f64>, DMatrix<f64>) {
    let mut r = rng(seed ^ 0xc0ffee);
    let ends = p.model.skeleton.endpoint_joints();
    let joints = [ends[2], ends[3]];
    let mut jc = DMatrix::zeros(3 * joints.len(), p.model.dof());
    for (c, &j) in joints.iter().enumerate() {
        jc.rows_mut(3 * c, 3).copy_from(&p.model.skeleton.point_jacobian(&p.frame.pose, j));
    }
    (random_vec(3 * joints.len(), &mut r, 400.0), jc)
}

/// Enumerates every support subset of the edge weights, solves the
/// unconstrained least squares on it and keeps the best non-negative one.
pub fn brute_force(model: &DynamicsModel, pose: &Pose, joints: &[usize], tau: &Vector6<f64>, mu: f64, beta: f64) -> (DVector<f64>, f64) {
    let up = model.up();
    let (t1, t2) = tangent_basis(&up);
    let edges = [up + t1 * mu, up - t1 * mu, up + t2 * mu, up - t2 * mu];
    let k = joints.len();
    let mut g = DMatrix::zeros(6, 3 * k);
    let mut basis = DMatrix::zeros(3 * k, 4 * k);
    for (c, &j) in joints.iter().enumerate() {
        let jac = model.skeleton.point_jacobian(pose, j);
        for row in 0..6 {
            for a in 0..3 {
                g[(row, 3 * c + a)] = jac[(a, row)];
            }
        }
        for (m, e) in edges.iter().enumerate() {
            basis.fixed_view_mut::<3, 1>(3 * c, 4 * c + m).copy_from(e);
        }
    }
    let objective = |lam: &DVector<f64>| {
        let r = tau - Vector6::from_iterator((&g * lam).iter().copied());
        r.norm_squared() + beta * lam.norm_squared()
    };
    let a_full = {
        let mut a = DMatrix::zeros(6 + 3 * k, 4 * k);
        a.rows_mut(0, 6).copy_from(&(&g * &basis));
        a.rows_mut(6, 3 * k).copy_from(&(&basis * beta.sqrt()));
        a
    };
    let mut b = DVector::zeros(6 + 3 * k);
    b.rows_mut(0, 6).copy_from(tau);
    let mut best = (DVector::zeros(3 * k), objective(&DVector::zeros(3 * k)));
    for mask in 1u32..(1 << (4 * k)) {
        let cols: Vec<usize> = (0..4 * k).filter(|i| mask & (1 << i) != 0).collect();
        let sub = a_full.select_columns(&cols);
        let w = sub.svd(true, true).solve(&b, 1e-12).unwrap();
        if w.iter().any(|&x| x < -1e-12) {
            continue;
        }
        let mut full = DVector::zeros(4 * k);
        for (i, &c) in cols.iter().enumerate() {
            full[c] = w[i];
        }
        let lam = &basis * full;
        let f = objective(&lam);
        if f < best.1 {
            best = (lam, f);
        }
    }
    best
}

pub fn in_pyramid(lambda: &Vector3<f64>, up: &Vector3<f64>, mu: f64) -> bool {
    let (t1, t2) = tangent_basis(up);
    let n = lambda.dot(up);
    n >= -1e-9 && lambda.dot(&t1).abs() + lambda.dot(&t2).abs() <= mu * n + 1e-9
}


fn positions(model: &SkeletonModel, q: &DVector<f64>) -> DVector<f64> {
    stack(model.forward_kinematics(q, None).unwrap())
}

pub fn velocity_error(model: &SkeletonModel, q: &DVector<f64>, qdot: &DVector<f64>) -> f64 {
    let h = 1e-6;
    let fd = (positions(model, &(q + qdot * h)) - positions(model, &(q - qdot * h))) / (2.0 * h);
    let jac = model.joint_jacobian(q).unwrap();
    (jac * qdot - fd).amax()
}

/// Compares `J q̈ + J̇ q̇` against a central difference of `J(q(t)) q̇(t)` along
/// the path `q(t) = q + q̇ t + ½ q̈ t²`.
pub fn acceleration_error(model: &SkeletonModel, q: &DVector<f64>, qdot: &DVector<f64>, qddot: &DVector<f64>) -> f64 {
    let h = 1e-5;
    let vel = |t: f64| {
        let qt = q + qdot * t + qddot * (0.5 * t * t);
        let qdt = qdot + qddot * t;
        model.joint_jacobian(&qt).unwrap() * qdt
    };
    let fd = (vel(h) - vel(-h)) / (2.0 * h);
    let analytic = model.joint_jacobian(q).unwrap() * qddot + model.jdot_qdot(q, qdot).unwrap();
    (analytic - fd).amax()
}

