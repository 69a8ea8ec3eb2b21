//! Articulated character model: joint tree, generalized-coordinate layout,
//! forward kinematics, joint Jacobians and the velocity-product term `J̇ q̇`.
//!
//! Generalized coordinates are `q = [p (3), e_0 (3), e_1 (3), ...]`, where `p` is
//! the world translation of the root joint and `e_i` are intrinsic XYZ Euler
//! angles of joint `i` relative to its parent (joint 0 is the root, so `e_0` is
//! the root orientation). The Euler parameterization is singular when the middle
//! angle reaches ±90°; no special handling is done for that case.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::math::{euler_xyz, euler_xyz_axes};

/// The five joints whose stationarity is estimated and that may carry contacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Endpoint {
    LeftHand,
    RightHand,
    LeftFoot,
    RightFoot,
    Pelvis,
}

impl Endpoint {
    pub const ALL: [Endpoint; 5] = [
        Endpoint::LeftHand,
        Endpoint::RightHand,
        Endpoint::LeftFoot,
        Endpoint::RightFoot,
        Endpoint::Pelvis,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_hand(self) -> bool {
        matches!(self, Endpoint::LeftHand | Endpoint::RightHand)
    }

    pub fn name(self) -> &'static str {
        match self {
            Endpoint::LeftHand => "lhand",
            Endpoint::RightHand => "rhand",
            Endpoint::LeftFoot => "lfoot",
            Endpoint::RightFoot => "rfoot",
            Endpoint::Pelvis => "pelvis",
        }
    }

    pub fn from_name(s: &str) -> Option<Endpoint> {
        Endpoint::ALL.into_iter().find(|e| e.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    /// Rest offset from the parent joint, in the parent's frame [m].
    pub offset: Vector3<f64>,
}

/// Mass properties of the rigid body attached to a joint frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyInertia {
    pub mass: f64,
    /// Centre of mass in the joint frame [m].
    pub com: Vector3<f64>,
    /// Inertia tensor about the centre of mass, joint frame [kg m²].
    pub inertia: Matrix3<f64>,
}

impl BodyInertia {
    /// Solid box of uniform `density` centred at `center`.
    pub fn solid_box(density: f64, center: Vector3<f64>, size: Vector3<f64>) -> Self {
        let mass = density * size.x * size.y * size.z;
        let (x2, y2, z2) = (size.x * size.x, size.y * size.y, size.z * size.z);
        let inertia = Matrix3::from_diagonal(&Vector3::new(
            mass * (y2 + z2) / 12.0,
            mass * (x2 + z2) / 12.0,
            mass * (x2 + y2) / 12.0,
        ));
        BodyInertia {
            mass,
            com: center,
            inertia,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SkeletonModel {
    joints: Vec<Joint>,
    bodies: Vec<BodyInertia>,
    endpoints: [usize; 5],
    /// Strict ancestors of each joint, root first.
    ancestors: Vec<Vec<usize>>,
    /// `ancestor_or_self[i * k + j]` is true when `j` is `i` or an ancestor of `i`.
    ancestor_or_self: Vec<bool>,
}

impl SkeletonModel {
    pub fn new(joints: Vec<Joint>, bodies: Vec<BodyInertia>, endpoints: [usize; 5]) -> Result<Self> {
        let k = joints.len();
        if k == 0 {
            return Err(Error::Config("skeleton has no joints".into()));
        }
        if bodies.len() != k {
            return Err(Error::dim("body records", k, bodies.len()));
        }
        if joints[0].parent.is_some() {
            return Err(Error::Config("joint 0 must be the root".into()));
        }
        for (i, j) in joints.iter().enumerate().skip(1) {
            match j.parent {
                Some(p) if p < i => {}
                _ => {
                    return Err(Error::Config(format!(
                        "joint {} ({}) must have a parent with a smaller index",
                        i, j.name
                    )))
                }
            }
        }
        for j in &joints {
            if !j.offset.iter().all(|v| v.is_finite()) {
                return Err(Error::Config(format!("joint {} has a non-finite offset", j.name)));
            }
        }
        for (b, j) in bodies.iter().zip(&joints) {
            if !(b.mass > 0.0 && b.mass.is_finite()) {
                return Err(Error::Config(format!("body {} must have positive mass", j.name)));
            }
            let sym = (b.inertia - b.inertia.transpose()).abs().max();
            let pd = b.inertia.cholesky().is_some();
            if sym > 1e-9 || !pd {
                return Err(Error::Config(format!(
                    "body {} inertia must be symmetric positive definite",
                    j.name
                )));
            }
        }
        if let Some(&e) = endpoints.iter().find(|&&e| e >= k) {
            return Err(Error::Config(format!("endpoint index {e} out of range")));
        }

        let mut ancestors = vec![Vec::new(); k];
        for i in 1..k {
            let p = joints[i].parent.unwrap();
            let mut a = ancestors[p].clone();
            a.push(p);
            ancestors[i] = a;
        }
        let mut ancestor_or_self = vec![false; k * k];
        for i in 0..k {
            ancestor_or_self[i * k + i] = true;
            for &a in &ancestors[i] {
                ancestor_or_self[i * k + a] = true;
            }
        }
        Ok(SkeletonModel {
            joints,
            bodies,
            endpoints,
            ancestors,
            ancestor_or_self,
        })
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn bodies(&self) -> &[BodyInertia] {
        &self.bodies
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    /// Number of generalized coordinates, `3 + 3 * joints`.
    pub fn dof(&self) -> usize {
        3 + 3 * self.joints.len()
    }

    /// Index of the `axis`-th Euler angle of `joint` inside `q`.
    pub fn dof_index(&self, joint: usize, axis: usize) -> usize {
        3 + 3 * joint + axis
    }

    pub fn joint_of_dof(&self, dof: usize) -> Option<usize> {
        (dof >= 3).then(|| (dof - 3) / 3)
    }

    pub fn endpoint_joint(&self, e: Endpoint) -> usize {
        self.endpoints[e.index()]
    }

    pub fn endpoint_joints(&self) -> [usize; 5] {
        self.endpoints
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn ancestors(&self, joint: usize) -> &[usize] {
        &self.ancestors[joint]
    }

    /// True when `ancestor` is `joint` itself or lies on its path to the root.
    pub fn is_ancestor_or_self(&self, ancestor: usize, joint: usize) -> bool {
        self.ancestor_or_self[joint * self.joints.len() + ancestor]
    }

    pub fn total_mass(&self) -> f64 {
        self.bodies.iter().map(|b| b.mass).sum()
    }

    fn check_q(&self, q: &DVector<f64>, what: &'static str) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::dim(what, self.dof(), q.len()));
        }
        if !q.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical(format!("{what} contains non-finite entries")));
        }
        Ok(())
    }

    /// Joint frames for configuration `q`.
    pub fn pose(&self, q: &DVector<f64>) -> Result<Pose> {
        self.check_q(q, "q")?;
        Ok(self.pose_unchecked(&Vector3::new(q[0], q[1], q[2]), &q.as_slice()[3..]))
    }

    /// Joint frames from a root translation and the `3k` Euler angles.
    pub fn pose_from_parts(&self, root: &Vector3<f64>, angles: &[f64]) -> Result<Pose> {
        if angles.len() != 3 * self.joints.len() {
            return Err(Error::dim("joint angles", 3 * self.joints.len(), angles.len()));
        }
        Ok(self.pose_unchecked(root, angles))
    }

    fn pose_unchecked(&self, root: &Vector3<f64>, angles: &[f64]) -> Pose {
        let k = self.joints.len();
        let mut positions = Vec::with_capacity(k);
        let mut rotations: Vec<Matrix3<f64>> = Vec::with_capacity(k);
        let mut axes = Vec::with_capacity(k);
        for (i, joint) in self.joints.iter().enumerate() {
            let e = Vector3::new(angles[3 * i], angles[3 * i + 1], angles[3 * i + 2]);
            let local_axes = euler_xyz_axes(&e);
            let local = euler_xyz(&e);
            let (pos, parent_rot) = match joint.parent {
                None => (*root, Matrix3::identity()),
                Some(p) => (positions[p] + rotations[p] * joint.offset, rotations[p]),
            };
            positions.push(pos);
            rotations.push(parent_rot * local);
            axes.push(local_axes.map(|a| parent_rot * a));
        }
        Pose {
            positions,
            rotations,
            axes,
        }
    }

    /// World positions of every joint. `root_override` replaces the translation
    /// stored in `q[0..3]`.
    pub fn forward_kinematics(
        &self,
        q: &DVector<f64>,
        root_override: Option<Vector3<f64>>,
    ) -> Result<Vec<Vector3<f64>>> {
        self.check_q(q, "q")?;
        let root = root_override.unwrap_or_else(|| Vector3::new(q[0], q[1], q[2]));
        Ok(self.pose_unchecked(&root, &q.as_slice()[3..]).positions)
    }

    /// Velocities and accelerations of every joint frame.
    ///
    /// With `qddot = None` the accelerations are the velocity-product terms only.
    pub fn joint_motion(
        &self,
        pose: &Pose,
        qdot: &DVector<f64>,
        qddot: Option<&DVector<f64>>,
    ) -> Vec<JointMotion> {
        let k = self.joints.len();
        let qdd = |i: usize| qddot.map_or(0.0, |a| a[i]);
        let mut out: Vec<JointMotion> = Vec::with_capacity(k);
        for (i, joint) in self.joints.iter().enumerate() {
            let (mut omega, mut alpha, vel, acc) = match joint.parent {
                None => (
                    Vector3::zeros(),
                    Vector3::zeros(),
                    Vector3::new(qdot[0], qdot[1], qdot[2]),
                    Vector3::new(qdd(0), qdd(1), qdd(2)),
                ),
                Some(p) => {
                    let m = &out[p];
                    let d = pose.positions[i] - pose.positions[p];
                    (
                        m.omega,
                        m.alpha,
                        m.vel + m.omega.cross(&d),
                        m.acc + m.alpha.cross(&d) + m.omega.cross(&m.omega.cross(&d)),
                    )
                }
            };
            for a in 0..3 {
                let idx = self.dof_index(i, a);
                let u = pose.axes[i][a];
                let spin = u * qdot[idx];
                alpha += omega.cross(&spin) + u * qdd(idx);
                omega += spin;
            }
            out.push(JointMotion {
                omega,
                alpha,
                vel,
                acc,
            });
        }
        out
    }

    /// 3×n Jacobian of the world position of `joint`.
    pub fn point_jacobian(&self, pose: &Pose, joint: usize) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(3, self.dof());
        self.fill_point_jacobian(pose, joint, &mut jac, 0);
        jac
    }

    fn fill_point_jacobian(&self, pose: &Pose, joint: usize, jac: &mut DMatrix<f64>, row: usize) {
        for a in 0..3 {
            jac[(row + a, a)] = 1.0;
        }
        let r = pose.positions[joint];
        for &anc in &self.ancestors[joint] {
            let lever = r - pose.positions[anc];
            for a in 0..3 {
                let col = self.dof_index(anc, a);
                let c = pose.axes[anc][a].cross(&lever);
                jac.fixed_view_mut::<3, 1>(row, col).copy_from(&c);
            }
        }
    }

    /// Stacked Jacobian (3k × n) of all joint positions.
    pub fn jacobian_from_pose(&self, pose: &Pose) -> DMatrix<f64> {
        let k = self.joints.len();
        let mut jac = DMatrix::zeros(3 * k, self.dof());
        for i in 0..k {
            self.fill_point_jacobian(pose, i, &mut jac, 3 * i);
        }
        jac
    }

    pub fn joint_jacobian(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let pose = self.pose(q)?;
        Ok(self.jacobian_from_pose(&pose))
    }

    /// The stacked `J̇ q̇` term (length 3k).
    pub fn jdot_qdot(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<DVector<f64>> {
        let pose = self.pose(q)?;
        self.check_q(qdot, "qdot")?;
        Ok(self.jdot_qdot_from_pose(&pose, qdot))
    }

    pub fn jdot_qdot_from_pose(&self, pose: &Pose, qdot: &DVector<f64>) -> DVector<f64> {
        let motion = self.joint_motion(pose, qdot, None);
        stack(motion.iter().map(|m| m.acc))
    }

    /// Parses the line-oriented skeleton description format.
    ///
    /// ```text
    /// joint <name> <parent|-> <ox> <oy> <oz>
    /// mass <name> <m> <cx> <cy> <cz> <Ixx> <Iyy> <Izz> <Ixy> <Ixz> <Iyz>
    /// endpoints <lhand> <rhand> <lfoot> <rfoot> <pelvis>    (optional)
    /// ```
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut joints: Vec<Joint> = Vec::new();
        let mut masses: Vec<Option<BodyInertia>> = Vec::new();
        let mut endpoint_names: Option<Vec<String>> = None;
        let mut mass_lines = Vec::new();

        for (ln, raw) in text.lines().enumerate() {
            let line_no = ln + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let nums = |from: usize, count: usize| -> Result<Vec<f64>> {
                if toks.len() != from + count {
                    return Err(perr(
                        line_no,
                        format!("expected {} fields, found {}", from + count, toks.len()),
                    ));
                }
                toks[from..]
                    .iter()
                    .map(|t| t.parse::<f64>().map_err(|e| perr(line_no, format!("bad number {t:?}: {e}"))))
                    .collect()
            };
            match toks[0] {
                "joint" => {
                    let v = nums(3, 3)?;
                    let name = toks[1].to_string();
                    if joints.iter().any(|j| j.name == name) {
                        return Err(perr(line_no, format!("duplicate joint {name}")));
                    }
                    let parent = match toks[2] {
                        "-" => None,
                        p => Some(
                            joints
                                .iter()
                                .position(|j| j.name == p)
                                .ok_or_else(|| perr(line_no, format!("unknown parent {p}")))?,
                        ),
                    };
                    joints.push(Joint {
                        name,
                        parent,
                        offset: Vector3::new(v[0], v[1], v[2]),
                    });
                    masses.push(None);
                }
                "mass" => mass_lines.push((line_no, toks.iter().map(|s| s.to_string()).collect::<Vec<_>>())),
                "endpoints" => {
                    if toks.len() != 6 {
                        return Err(perr(line_no, "endpoints needs five joint names".into()));
                    }
                    endpoint_names = Some(toks[1..].iter().map(|s| s.to_string()).collect());
                }
                other => return Err(perr(line_no, format!("unknown record type {other:?}"))),
            }
        }

        for (line_no, toks) in mass_lines {
            if toks.len() != 12 {
                return Err(perr(line_no, format!("expected 12 fields, found {}", toks.len())));
            }
            let idx = joints
                .iter()
                .position(|j| j.name == toks[1])
                .ok_or_else(|| perr(line_no, format!("mass for unknown joint {}", toks[1])))?;
            let v: Vec<f64> = toks[2..]
                .iter()
                .map(|t| t.parse::<f64>().map_err(|e| perr(line_no, format!("bad number {t:?}: {e}"))))
                .collect::<Result<_>>()?;
            let inertia = Matrix3::new(v[4], v[7], v[8], v[7], v[5], v[9], v[8], v[9], v[6]);
            masses[idx] = Some(BodyInertia {
                mass: v[0],
                com: Vector3::new(v[1], v[2], v[3]),
                inertia,
            });
        }

        let bodies = masses
            .into_iter()
            .enumerate()
            .map(|(i, m)| m.ok_or_else(|| Error::Config(format!("joint {} has no mass record", joints[i].name))))
            .collect::<Result<Vec<_>>>()?;

        let names = endpoint_names.unwrap_or_else(|| {
            ["left_hand", "right_hand", "left_foot", "right_foot", "pelvis"]
                .map(String::from)
                .to_vec()
        });
        let mut endpoints = [0usize; 5];
        for (slot, name) in endpoints.iter_mut().zip(&names) {
            *slot = joints
                .iter()
                .position(|j| &j.name == name)
                .ok_or_else(|| Error::Config(format!("endpoint joint {name} not in skeleton")))?;
        }
        SkeletonModel::new(joints, bodies, endpoints)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Serializes to the skeleton description format.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# skeleton v1\n");
        for j in &self.joints {
            let parent = j.parent.map_or("-", |p| self.joints[p].name.as_str());
            let _ = writeln!(
                s,
                "joint {} {} {:.17e} {:.17e} {:.17e}",
                j.name, parent, j.offset.x, j.offset.y, j.offset.z
            );
        }
        for (j, b) in self.joints.iter().zip(&self.bodies) {
            let i = &b.inertia;
            let _ = writeln!(
                s,
                "mass {} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e}",
                j.name,
                b.mass,
                b.com.x,
                b.com.y,
                b.com.z,
                i[(0, 0)],
                i[(1, 1)],
                i[(2, 2)],
                i[(0, 1)],
                i[(0, 2)],
                i[(1, 2)]
            );
        }
        let _ = writeln!(
            s,
            "endpoints {}",
            self.endpoints
                .iter()
                .map(|&e| self.joints[e].name.as_str())
                .collect::<Vec<_>>()
                .join(" ")
        );
        s
    }

    /// 24-joint humanoid with SMPL topology and mean-shape joint offsets
    /// (y up, z forward, x to the character's left). Each body is a solid box
    /// of density 1000 kg/m³ whose cross-sections are scaled so the total mass
    /// is 80 kg.
    pub fn humanoid() -> Self {
        const DENSITY: f64 = 1000.0;
        const TARGET_MASS: f64 = 80.0;
        // name, parent, offset, box center, box size, long axis
        #[rustfmt::skip]
        let table: [(&str, Option<usize>, [f64; 3], [f64; 3], [f64; 3], usize); 24] = [
            ("pelvis",         None,     [0.0, 0.0, 0.0],            [0.0, -0.02, 0.0],          [0.30, 0.14, 0.20], 1),
            ("left_hip",       Some(0),  [0.0586, -0.0823, -0.0177], [0.0218, -0.1933, 0.0040],  [0.14, 0.39, 0.14], 1),
            ("right_hip",      Some(0),  [-0.0603, -0.0905, -0.0135],[-0.0217, -0.1919, -0.0024],[0.14, 0.39, 0.14], 1),
            ("spine1",         Some(0),  [0.0044, 0.1244, -0.0384],  [0.0023, 0.0690, 0.0134],   [0.28, 0.14, 0.18], 1),
            ("left_knee",      Some(1),  [0.0435, -0.3865, 0.0080],  [-0.0074, -0.2135, -0.0187],[0.10, 0.42, 0.10], 1),
            ("right_knee",     Some(2),  [-0.0433, -0.3837, -0.0048],[0.0096, -0.2100, -0.0173], [0.10, 0.42, 0.10], 1),
            ("spine2",         Some(3),  [0.0045, 0.1380, 0.0268],   [-0.0012, 0.0280, 0.0015],  [0.30, 0.08, 0.19], 1),
            ("left_ankle",     Some(4),  [-0.0148, -0.4269, -0.0374],[0.0200, -0.0350, 0.0600],  [0.09, 0.06, 0.20], 2),
            ("right_ankle",    Some(5),  [0.0191, -0.4200, -0.0346], [-0.0170, -0.0350, 0.0650], [0.09, 0.06, 0.20], 2),
            ("spine3",         Some(6),  [-0.0023, 0.0560, 0.0029],  [0.0, 0.10, -0.01],         [0.32, 0.20, 0.20], 1),
            ("left_foot",      Some(7),  [0.0412, -0.0603, 0.1220],  [0.0, -0.005, 0.03],        [0.09, 0.03, 0.06], 2),
            ("right_foot",     Some(8),  [-0.0348, -0.0621, 0.1303], [0.0, -0.005, 0.03],        [0.09, 0.03, 0.06], 2),
            ("neck",           Some(9),  [-0.0134, 0.2116, -0.0335], [0.0050, 0.0440, 0.0250],   [0.10, 0.09, 0.10], 1),
            ("left_collar",    Some(9),  [0.0717, 0.1140, -0.0189],  [0.0615, 0.0226, -0.0095],  [0.12, 0.08, 0.10], 0),
            ("right_collar",   Some(9),  [-0.0830, 0.1125, -0.0237], [-0.0566, 0.0235, -0.0043], [0.12, 0.08, 0.10], 0),
            ("head",           Some(12), [0.0101, 0.0889, 0.0504],   [0.0, 0.09, 0.01],          [0.15, 0.22, 0.19], 1),
            ("left_shoulder",  Some(13), [0.1229, 0.0452, -0.0190],  [0.1277, -0.0078, -0.0115], [0.26, 0.09, 0.09], 0),
            ("right_shoulder", Some(14), [-0.1132, 0.0469, -0.0085], [-0.1300, -0.0072, -0.0157],[0.26, 0.09, 0.09], 0),
            ("left_elbow",     Some(16), [0.2553, -0.0156, -0.0229], [0.1329, 0.0064, -0.0037],  [0.27, 0.07, 0.07], 0),
            ("right_elbow",    Some(17), [-0.2601, -0.0144, -0.0313],[-0.1346, 0.0034, -0.0030], [0.27, 0.07, 0.07], 0),
            ("left_wrist",     Some(18), [0.2657, 0.0127, -0.0074],  [0.0434, -0.0053, -0.0078], [0.09, 0.03, 0.08], 0),
            ("right_wrist",    Some(19), [-0.2691, 0.0068, -0.0060], [-0.0444, -0.0050, -0.0069],[0.09, 0.03, 0.08], 0),
            ("left_hand",      Some(20), [0.0867, -0.0106, -0.0156], [0.04, 0.0, 0.0],           [0.08, 0.02, 0.08], 0),
            ("right_hand",     Some(21), [-0.0888, -0.0099, -0.0137],[-0.04, 0.0, 0.0],          [0.08, 0.02, 0.08], 0),
        ];
        let volume: f64 = table.iter().map(|t| t.4[0] * t.4[1] * t.4[2]).sum();
        let scale = (TARGET_MASS / (DENSITY * volume)).sqrt();
        let mut joints = Vec::with_capacity(24);
        let mut bodies = Vec::with_capacity(24);
        for (name, parent, off, center, size, long) in table {
            joints.push(Joint {
                name: name.to_string(),
                parent,
                offset: Vector3::from(off),
            });
            let mut s = Vector3::from(size);
            for a in 0..3 {
                if a != long {
                    s[a] *= scale;
                }
            }
            bodies.push(BodyInertia::solid_box(DENSITY, Vector3::from(center), s));
        }
        // lhand, rhand, lfoot, rfoot, pelvis
        SkeletonModel::new(joints, bodies, [22, 23, 10, 11, 0]).expect("bundled humanoid is valid")
    }

    /// Four-joint open chain used by tests. Endpoints map onto the chain's
    /// joints (several endpoints share the tip).
    pub fn test_chain() -> Self {
        let offsets = [
            [0.0, 0.0, 0.0],
            [0.1, -0.3, 0.05],
            [0.0, -0.25, 0.1],
            [0.05, -0.2, 0.0],
        ];
        let names = ["base", "link1", "link2", "tip"];
        let mut joints = Vec::new();
        let mut bodies = Vec::new();
        for i in 0..4 {
            joints.push(Joint {
                name: names[i].to_string(),
                parent: if i == 0 { None } else { Some(i - 1) },
                offset: Vector3::from(offsets[i]),
            });
            let center = if i + 1 < 4 {
                Vector3::from(offsets[i + 1]) * 0.5
            } else {
                Vector3::new(0.0, -0.05, 0.0)
            };
            let size = if i == 0 {
                Vector3::new(0.3, 0.15, 0.2)
            } else {
                Vector3::new(0.08, 0.25, 0.07)
            };
            bodies.push(BodyInertia::solid_box(1000.0, center, size));
        }
        SkeletonModel::new(joints, bodies, [3, 3, 2, 3, 0]).expect("bundled chain is valid")
    }
}

/// Joint frames of one configuration.
#[derive(Debug, Clone)]
pub struct Pose {
    pub positions: Vec<Vector3<f64>>,
    /// World orientation of each joint frame.
    pub rotations: Vec<Matrix3<f64>>,
    /// World-frame axes of the three Euler rates of each joint.
    pub axes: Vec<[Vector3<f64>; 3]>,
}

#[derive(Debug, Clone, Copy)]
pub struct JointMotion {
    pub omega: Vector3<f64>,
    pub alpha: Vector3<f64>,
    pub vel: Vector3<f64>,
    pub acc: Vector3<f64>,
}

/// Generalized position and velocity of the physics character.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacterState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

impl CharacterState {
    pub fn zeros(model: &SkeletonModel) -> Self {
        CharacterState {
            q: DVector::zeros(model.dof()),
            qdot: DVector::zeros(model.dof()),
        }
    }

    pub fn new(model: &SkeletonModel, q: DVector<f64>, qdot: DVector<f64>) -> Result<Self> {
        let s = CharacterState { q, qdot };
        s.validate(model)?;
        Ok(s)
    }

    pub fn validate(&self, model: &SkeletonModel) -> Result<()> {
        model.check_q(&self.q, "q")?;
        model.check_q(&self.qdot, "qdot")
    }

    pub fn root_position(&self) -> Vector3<f64> {
        Vector3::new(self.q[0], self.q[1], self.q[2])
    }

    /// Euler angles of all joints (`q[3..]`).
    pub fn angles(&self) -> &[f64] {
        &self.q.as_slice()[3..]
    }
}

/// Builds `q` from a root translation and joint angles.
pub fn compose_q(root: &Vector3<f64>, angles: &[f64]) -> DVector<f64> {
    let mut q = DVector::zeros(3 + angles.len());
    q.fixed_rows_mut::<3>(0).copy_from(root);
    q.as_mut_slice()[3..].copy_from_slice(angles);
    q
}

pub fn stack<I: IntoIterator<Item = Vector3<f64>>>(vs: I) -> DVector<f64> {
    let flat: Vec<f64> = vs.into_iter().flat_map(|v| [v.x, v.y, v.z]).collect();
    DVector::from_vec(flat)
}
