mod common;

use common::*;
use imuphys::DynamicsModel;
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use proptest::prelude::*;

/// Kinetic energy from finite differences of the pose alone: body COM
/// velocities and angular velocities come from `pose(q ± q̇ h)`.
fn kinetic_energy_oracle(model: &DynamicsModel, q: &DVector<f64>, qdot: &DVector<f64>) -> f64 {
    let h = 1e-6;
    let sk = &model.skeleton;
    let a = sk.pose(&(q - qdot * h)).unwrap();
    let b = sk.pose(&(q + qdot * h)).unwrap();
    let mid = sk.pose(q).unwrap();
    let mut ke = 0.0;
    for (i, body) in sk.bodies().iter().enumerate() {
        let com = |p: &imuphys::skeleton::Pose| p.positions[i] + p.rotations[i] * body.com;
        let v = (com(&b) - com(&a)) / (2.0 * h);
        let rdot: Matrix3<f64> = (b.rotations[i] - a.rotations[i]) / (2.0 * h);
        let w = rdot * mid.rotations[i].transpose();
        let omega = Vector3::new(w[(2, 1)] - w[(1, 2)], w[(0, 2)] - w[(2, 0)], w[(1, 0)] - w[(0, 1)]) * 0.5;
        let inertia = mid.rotations[i] * body.inertia * mid.rotations[i].transpose();
        ke += 0.5 * body.mass * v.norm_squared() + 0.5 * omega.dot(&(inertia * omega));
    }
    ke
}

fn potential(model: &DynamicsModel, q: &DVector<f64>) -> f64 {
    -model.total_mass() * model.gravity.dot(&model.center_of_mass(q).unwrap())
}

fn models() -> Vec<(&'static str, DynamicsModel)> {
    common::models().into_iter().map(|(n, m)| (n, DynamicsModel::new(m))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn inverse_dynamics_is_mass_matrix_plus_bias(seed in any::<u64>()) {
        let mut r = rng(seed);
        for (name, m) in models() {
            let n = m.dof();
            let q = random_q(&m.skeleton, &mut r);
            let qdot = random_vec(n, &mut r, 3.0);
            let qddot = random_vec(n, &mut r, 10.0);
            let tau = m.inverse_dynamics(&q, &qdot, &qddot).unwrap();
            let mm = m.mass_matrix(&q).unwrap();
            let h = m.bias_forces(&q, &qdot).unwrap();
            let err = (&tau - (&mm * &qddot + h)).norm();
            prop_assert!(err <= 1e-8 * (1.0 + tau.norm()), "{name}: {err:e}");
            prop_assert!((&mm - mm.transpose()).amax() < 1e-12);
            prop_assert!(mm.clone().cholesky().is_some(), "{name}: M not positive definite");
        }
    }

    #[test]
    fn mass_matrix_matches_pose_kinetic_energy(seed in any::<u64>()) {
        let mut r = rng(seed);
        for (name, m) in models() {
            let q = random_q(&m.skeleton, &mut r);
            let qdot = random_vec(m.dof(), &mut r, 2.0);
            let mm = m.mass_matrix(&q).unwrap();
            let ke = 0.5 * qdot.dot(&(&mm * &qdot));
            let oracle = kinetic_energy_oracle(&m, &q, &qdot);
            prop_assert!((ke - oracle).abs() < 1e-6 * (1.0 + oracle), "{name}: {ke} vs {oracle}");
        }
    }

    #[test]
    fn gravity_term_is_potential_gradient(seed in any::<u64>()) {
        let mut r = rng(seed);
        for (name, m) in models() {
            let n = m.dof();
            let q = random_q(&m.skeleton, &mut r);
            let g = m.bias_forces(&q, &DVector::zeros(n)).unwrap();
            let h = 1e-6;
            for i in 0..n {
                let mut e = DVector::zeros(n);
                e[i] = h;
                let grad = (potential(&m, &(&q + &e)) - potential(&m, &(&q - &e))) / (2.0 * h);
                prop_assert!((grad - g[i]).abs() < 1e-5 * (1.0 + g.amax()), "{name} dof {i}: {grad} vs {}", g[i]);
            }
        }
    }

    /// Power balance `q̇ᵀ(τ - g) = dT/dt`, which holds only if the
    /// velocity-product terms are consistent with `M`.
    #[test]
    fn power_balance(seed in any::<u64>()) {
        let mut r = rng(seed);
        for (name, m) in models() {
            let n = m.dof();
            let q = random_q(&m.skeleton, &mut r);
            let qdot = random_vec(n, &mut r, 2.0);
            let qddot = random_vec(n, &mut r, 5.0);
            let tau = m.inverse_dynamics(&q, &qdot, &qddot).unwrap();
            let g = m.bias_forces(&q, &DVector::zeros(n)).unwrap();
            let ke = |t: f64| {
                let qt = &q + &qdot * t + &qddot * (0.5 * t * t);
                let qdt = &qdot + &qddot * t;
                m.kinetic_energy(&qt, &qdt).unwrap()
            };
            let h = 1e-5;
            let dke = (ke(h) - ke(-h)) / (2.0 * h);
            let power = qdot.dot(&(tau - g));
            prop_assert!((dke - power).abs() < 1e-5 * (1.0 + power.abs()), "{name}: {dke} vs {power}");
        }
    }
}

fn forward_dynamics(m: &DynamicsModel, q: &DVector<f64>, qdot: &DVector<f64>) -> DVector<f64> {
    let mm = m.mass_matrix(q).unwrap();
    let h = m.bias_forces(q, qdot).unwrap();
    mm.cholesky().unwrap().solve(&(-h))
}

#[test]
fn passive_motion_conserves_energy() {
    let m = DynamicsModel::new(imuphys::SkeletonModel::test_chain());
    let mut r = rng(11);
    let mut q = random_q(&m.skeleton, &mut r) * 0.5;
    let mut qdot = random_vec(m.dof(), &mut r, 1.0);
    let energy = |q: &DVector<f64>, qd: &DVector<f64>| m.kinetic_energy(q, qd).unwrap() + potential(&m, q);
    let e0 = energy(&q, &qdot);
    let dt = 1e-3;
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let k1q = qdot.clone();
        let k1v = forward_dynamics(&m, &q, &qdot);
        let k2q = &qdot + &k1v * (dt / 2.0);
        let k2v = forward_dynamics(&m, &(&q + &k1q * (dt / 2.0)), &k2q);
        let k3q = &qdot + &k2v * (dt / 2.0);
        let k3v = forward_dynamics(&m, &(&q + &k2q * (dt / 2.0)), &k3q);
        let k4q = &qdot + &k3v * dt;
        let k4v = forward_dynamics(&m, &(&q + &k3q * dt), &k4q);
        q += (k1q + &k2q * 2.0 + &k3q * 2.0 + k4q) * (dt / 6.0);
        qdot += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0);
        worst = worst.max((energy(&q, &qdot) - e0).abs());
    }
    assert!(worst < 1e-6 * (1.0 + e0.abs()), "energy drift {worst:e} from {e0}");
}

#[test]
fn cholesky_factor_reconstructs_mass_matrix() {
    let m = DynamicsModel::new(imuphys::SkeletonModel::humanoid());
    let mut r = rng(3);
    let q = random_q(&m.skeleton, &mut r);
    let mm = m.mass_matrix(&q).unwrap();
    let l: DMatrix<f64> = mm.clone().cholesky().unwrap().l();
    assert!((&l * l.transpose() - &mm).amax() < 1e-10);
}
