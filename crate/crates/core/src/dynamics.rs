//! Floating-base equations of motion `τ = M(q) q̈ + h(q, q̇)`.
//!
//! `M` is built with a composite-rigid-body pass; `h` and full inverse
//! dynamics use recursive Newton-Euler. Both work in world coordinates. The
//! first six generalized forces are the root residual: a world-frame force
//! followed by the moment about the root joint origin projected on the root's
//! Euler-rate axes.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::skeleton::{Pose, SkeletonModel};

pub const DEFAULT_GRAVITY: f64 = 9.8;

#[derive(Debug, Clone)]
pub struct DynamicsModel {
    pub skeleton: SkeletonModel,
    /// Gravity acceleration in the world frame [m/s²].
    pub gravity: Vector3<f64>,
}

/// World-frame mass properties of one body for a given pose.
struct WorldBody {
    mass: f64,
    com: Vector3<f64>,
    inertia: Matrix3<f64>,
}

impl DynamicsModel {
    /// Y-up model with |g| = 9.8 m/s².
    pub fn new(skeleton: SkeletonModel) -> Self {
        DynamicsModel {
            skeleton,
            gravity: Vector3::new(0.0, -DEFAULT_GRAVITY, 0.0),
        }
    }

    pub fn with_gravity(skeleton: SkeletonModel, gravity: Vector3<f64>) -> Self {
        DynamicsModel { skeleton, gravity }
    }

    pub fn dof(&self) -> usize {
        self.skeleton.dof()
    }

    pub fn total_mass(&self) -> f64 {
        self.skeleton.total_mass()
    }

    /// Unit vector opposite to gravity.
    pub fn up(&self) -> Vector3<f64> {
        -self.gravity.normalize()
    }

    fn world_bodies(&self, pose: &Pose) -> Vec<WorldBody> {
        self.skeleton
            .bodies()
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let r = pose.rotations[i];
                WorldBody {
                    mass: b.mass,
                    com: pose.positions[i] + r * b.com,
                    inertia: r * b.inertia * r.transpose(),
                }
            })
            .collect()
    }

    fn check(&self, v: &DVector<f64>, what: &'static str) -> Result<()> {
        if v.len() != self.dof() {
            return Err(Error::dim(what, self.dof(), v.len()));
        }
        Ok(())
    }

    pub fn mass_matrix(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let pose = self.skeleton.pose(q)?;
        Ok(self.mass_matrix_from_pose(&pose))
    }

    /// Composite-rigid-body mass matrix.
    pub fn mass_matrix_from_pose(&self, pose: &Pose) -> DMatrix<f64> {
        let sk = &self.skeleton;
        let k = sk.joint_count();
        let n = sk.dof();
        let bodies = self.world_bodies(pose);

        // Composite mass, centre of mass and inertia (about its CoM) of each subtree.
        let mut c_mass: Vec<f64> = bodies.iter().map(|b| b.mass).collect();
        let mut c_first: Vec<Vector3<f64>> = bodies.iter().map(|b| b.com * b.mass).collect();
        for i in (1..k).rev() {
            let p = sk.joints()[i].parent.unwrap();
            c_mass[p] += c_mass[i];
            let f = c_first[i];
            c_first[p] += f;
        }
        let c_com: Vec<Vector3<f64>> = (0..k).map(|i| c_first[i] / c_mass[i]).collect();
        let mut c_inertia = vec![Matrix3::zeros(); k];
        for (b_idx, b) in bodies.iter().enumerate() {
            // Every composite that contains body b_idx: b_idx and its ancestors.
            let mut owners = sk.ancestors(b_idx).to_vec();
            owners.push(b_idx);
            for c in owners {
                let d = b.com - c_com[c];
                c_inertia[c] += b.inertia + b.mass * (Matrix3::identity() * d.norm_squared() - d * d.transpose());
            }
        }

        let mut m = DMatrix::zeros(n, n);
        let total = c_mass[0];
        for a in 0..3 {
            m[(a, a)] = total;
        }
        for i in 0..k {
            for a in 0..3 {
                let col = sk.dof_index(i, a);
                let u = pose.axes[i][a];
                let lever = c_com[i] - pose.positions[i];
                let force = c_mass[i] * u.cross(&lever);
                let moment = c_inertia[i] * u + lever.cross(&force);
                for t in 0..3 {
                    m[(t, col)] = force[t];
                    m[(col, t)] = force[t];
                }
                // Same joint: only fill up to the diagonal, the rest comes from symmetry.
                for b in 0..=a {
                    let row = sk.dof_index(i, b);
                    let v = pose.axes[i][b].dot(&moment);
                    m[(row, col)] = v;
                    m[(col, row)] = v;
                }
                for &j in sk.ancestors(i) {
                    let moment_j = moment + (pose.positions[i] - pose.positions[j]).cross(&force);
                    for b in 0..3 {
                        let row = sk.dof_index(j, b);
                        let v = pose.axes[j][b].dot(&moment_j);
                        m[(row, col)] = v;
                        m[(col, row)] = v;
                    }
                }
            }
        }
        m
    }

    /// Recursive Newton-Euler inverse dynamics.
    pub fn inverse_dynamics(
        &self,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        qddot: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let pose = self.skeleton.pose(q)?;
        self.check(qdot, "qdot")?;
        self.check(qddot, "qddot")?;
        Ok(self.rnea(&pose, qdot, Some(qddot)))
    }

    /// `h(q, q̇)`: inverse dynamics at zero acceleration.
    pub fn bias_forces(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<DVector<f64>> {
        let pose = self.skeleton.pose(q)?;
        self.check(qdot, "qdot")?;
        Ok(self.bias_forces_from_pose(&pose, qdot))
    }

    pub fn bias_forces_from_pose(&self, pose: &Pose, qdot: &DVector<f64>) -> DVector<f64> {
        self.rnea(pose, qdot, None)
    }

    fn rnea(&self, pose: &Pose, qdot: &DVector<f64>, qddot: Option<&DVector<f64>>) -> DVector<f64> {
        let sk = &self.skeleton;
        let k = sk.joint_count();
        let motion = sk.joint_motion(pose, qdot, qddot);
        let bodies = self.world_bodies(pose);
        let g = self.gravity;

        let mut force = vec![Vector3::zeros(); k];
        let mut moment = vec![Vector3::zeros(); k];
        for i in 0..k {
            let b = &bodies[i];
            let m = &motion[i];
            let d = b.com - pose.positions[i];
            let a_com = m.acc + m.alpha.cross(&d) + m.omega.cross(&m.omega.cross(&d));
            let f = b.mass * (a_com - g);
            let n = b.inertia * m.alpha + m.omega.cross(&(b.inertia * m.omega));
            force[i] = f;
            moment[i] = n + d.cross(&f);
        }
        for i in (1..k).rev() {
            let p = sk.joints()[i].parent.unwrap();
            let lever = pose.positions[i] - pose.positions[p];
            let (f, n) = (force[i], moment[i]);
            force[p] += f;
            moment[p] += n + lever.cross(&f);
        }
        let mut tau = DVector::zeros(sk.dof());
        tau.fixed_rows_mut::<3>(0).copy_from(&force[0]);
        for i in 0..k {
            for a in 0..3 {
                tau[sk.dof_index(i, a)] = pose.axes[i][a].dot(&moment[i]);
            }
        }
        tau
    }

    /// Total kinetic energy `½ q̇ᵀ M q̇`, summed body by body.
    pub fn kinetic_energy(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<f64> {
        let pose = self.skeleton.pose(q)?;
        self.check(qdot, "qdot")?;
        let motion = self.skeleton.joint_motion(&pose, qdot, None);
        let bodies = self.world_bodies(&pose);
        Ok(bodies
            .iter()
            .zip(&motion)
            .enumerate()
            .map(|(i, (b, m))| {
                let v = m.vel + m.omega.cross(&(b.com - pose.positions[i]));
                0.5 * b.mass * v.norm_squared() + 0.5 * m.omega.dot(&(b.inertia * m.omega))
            })
            .sum())
    }

    /// Whole-body centre of mass.
    pub fn center_of_mass(&self, q: &DVector<f64>) -> Result<Vector3<f64>> {
        let pose = self.skeleton.pose(q)?;
        let bodies = self.world_bodies(&pose);
        let m: f64 = bodies.iter().map(|b| b.mass).sum();
        Ok(bodies.iter().map(|b| b.com * b.mass).sum::<Vector3<f64>>() / m)
    }
}
