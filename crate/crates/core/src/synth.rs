//! Synthetic motions, IMU streams and estimator frames with known ground truth.

use nalgebra::{DVector, Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::calibration::{ImuLog, ImuSample, SENSOR_COUNT};
use crate::error::{Error, Result};
use crate::math::{axis_angle, euler_xyz, euler_xyz_from_matrix, rotation_log};
use crate::skeleton::{compose_q, Endpoint, SkeletonModel};
use crate::translation::{decompose_velocity, EstimatorFrame};

/// Root translation and joint angles sampled at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    pub frame_rate: f64,
    pub root: Vec<Vector3<f64>>,
    pub angles: Vec<Vec<f64>>,
    /// Ground-truth contact flags per frame, ordered as [`Endpoint::ALL`].
    pub contacts: Option<Vec<[bool; 5]>>,
}

impl MotionSequence {
    pub fn len(&self) -> usize {
        self.root.len()
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.frame_rate
    }

    pub fn validate(&self, model: &SkeletonModel) -> Result<()> {
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(Error::Config(format!("invalid frame rate {}", self.frame_rate)));
        }
        if self.angles.len() != self.root.len() {
            return Err(Error::dim("motion angle frames", self.root.len(), self.angles.len()));
        }
        if let Some(a) = self.angles.iter().find(|a| a.len() != 3 * model.joint_count()) {
            return Err(Error::dim("motion joint angles", 3 * model.joint_count(), a.len()));
        }
        if let Some(c) = &self.contacts {
            if c.len() != self.root.len() {
                return Err(Error::dim("motion contact frames", self.root.len(), c.len()));
            }
        }
        Ok(())
    }

    pub fn q(&self, t: usize) -> DVector<f64> {
        compose_q(&self.root[t], &self.angles[t])
    }

    /// World joint positions of every frame.
    pub fn joint_positions(&self, model: &SkeletonModel) -> Result<Vec<Vec<Vector3<f64>>>> {
        (0..self.len())
            .map(|t| Ok(model.pose_from_parts(&self.root[t], &self.angles[t])?.positions))
            .collect()
    }
}

/// Where a sensor sits on the body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorAttachment {
    pub joint: usize,
    /// Mounting point in the bone frame [m].
    pub offset: Vector3<f64>,
    /// Sensor-to-bone rotation.
    pub r_sb: Matrix3<f64>,
}

fn find_joint(model: &SkeletonModel, name: &str) -> Result<usize> {
    model
        .joint_index(name)
        .ok_or_else(|| Error::Config(format!("skeleton has no joint named {name}")))
}

/// Forearms, shanks, head and pelvis of the bundled humanoid, with fixed
/// arbitrary mounting rotations.
pub fn default_attachments(model: &SkeletonModel) -> Result<[SensorAttachment; SENSOR_COUNT]> {
    let spec: [(&str, [f64; 3], [f64; 3]); SENSOR_COUNT] = [
        ("left_elbow", [0.13, 0.0, 0.0], [0.3, -0.8, 0.2]),
        ("right_elbow", [-0.13, 0.0, 0.0], [-0.4, 0.6, 0.1]),
        ("left_knee", [0.0, -0.2, 0.05], [1.2, 0.3, -0.2]),
        ("right_knee", [0.0, -0.2, 0.05], [-0.9, 0.2, 0.5]),
        ("head", [0.0, 0.08, 0.09], [0.1, 2.0, 0.3]),
        ("pelvis", [0.0, 0.0, -0.1], [0.2, 3.0, -0.1]),
    ];
    let mut out = [SensorAttachment {
        joint: 0,
        offset: Vector3::zeros(),
        r_sb: Matrix3::identity(),
    }; SENSOR_COUNT];
    for (i, (name, off, rv)) in spec.iter().enumerate() {
        let rv = Vector3::from(*rv);
        out[i] = SensorAttachment {
            joint: find_joint(model, name)?,
            offset: Vector3::from(*off),
            r_sb: axis_angle(&rv, rv.norm()),
        };
    }
    Ok(out)
}

fn second_difference<T>(x: &[T], t: usize, dt: f64) -> T
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let n = x.len();
    let (a, b, c) = if t == 0 {
        (0, 1, 2)
    } else if t == n - 1 {
        (n - 3, n - 2, n - 1)
    } else {
        (t - 1, t, t + 1)
    };
    (x[a] + x[c] - x[b] * 2.0) * (1.0 / (dt * dt))
}

/// Simulated IMU readings for a motion.
///
/// `r_im` rotates model-frame vectors into the inertial frame and `g_model`
/// is gravity in the model frame. Orientations are `R_IS = R_IM W R_SBᵀ`;
/// sensor accelerations come from second differences of the sensor positions.
pub fn synthesize_imu(
    model: &SkeletonModel,
    motion: &MotionSequence,
    attachments: &[SensorAttachment; SENSOR_COUNT],
    r_im: &Matrix3<f64>,
    g_model: &Vector3<f64>,
) -> Result<ImuLog> {
    motion.validate(model)?;
    let n = motion.len();
    if n < 3 {
        return Err(Error::Config(format!("need at least 3 frames to synthesize IMU data, got {n}")));
    }
    let dt = motion.dt();
    let g_i = r_im * g_model;
    let poses: Vec<_> = (0..n)
        .map(|t| model.pose_from_parts(&motion.root[t], &motion.angles[t]))
        .collect::<Result<_>>()?;
    let mut sensors = Vec::with_capacity(SENSOR_COUNT);
    for att in attachments {
        let pos: Vec<Vector3<f64>> = poses
            .iter()
            .map(|p| p.positions[att.joint] + p.rotations[att.joint] * att.offset)
            .collect();
        let rot: Vec<Matrix3<f64>> = poses
            .iter()
            .map(|p| r_im * p.rotations[att.joint] * att.r_sb.transpose())
            .collect();
        let samples = (0..n)
            .map(|t| {
                let a_i = r_im * second_difference(&pos, t, dt);
                let (lo, hi) = (t.saturating_sub(1), (t + 1).min(n - 1));
                let gyro = rotation_log(&(rot[lo].transpose() * rot[hi])) / ((hi - lo) as f64 * dt);
                ImuSample {
                    acc: rot[t].transpose() * (a_i - g_i),
                    gyro,
                    r_is: rot[t],
                }
            })
            .collect();
        sensors.push(samples);
    }
    ImuLog::new(motion.frame_rate, sensors)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuNoise {
    /// Per-axis white noise on the accelerometer [m/s²].
    pub acc_sigma: f64,
    /// Constant heading error of each sensor about gravity [deg].
    pub yaw_drift_deg: [f64; SENSOR_COUNT],
    pub seed: u64,
}

/// Adds accelerometer noise and heading drift to a clean log.
pub fn corrupt_imu(log: &ImuLog, g_inertial: &Vector3<f64>, noise: &ImuNoise) -> Result<ImuLog> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let dist = Normal::new(0.0, noise.acc_sigma.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let axis = -g_inertial.normalize();
    let mut out = log.clone();
    for (i, sensor) in out.sensors.iter_mut().enumerate() {
        let drift = axis_angle(&axis, noise.yaw_drift_deg[i].to_radians());
        for s in sensor.iter_mut() {
            s.r_is = drift * s.r_is;
            if noise.acc_sigma > 0.0 {
                s.acc += Vector3::new(dist.sample(&mut rng), dist.sample(&mut rng), dist.sample(&mut rng));
            }
        }
    }
    Ok(out)
}

/// Binary stationary labels (endpoint moved less than `threshold` metres since
/// the previous frame), smoothed with a centered 5-frame mean.
pub fn stationary_labels(model: &SkeletonModel, motion: &MotionSequence, threshold: f64) -> Result<Vec<[f64; 5]>> {
    let pos = motion.joint_positions(model)?;
    let ends = model.endpoint_joints();
    let n = pos.len();
    let raw: Vec<[f64; 5]> = (0..n)
        .map(|t| {
            std::array::from_fn(|e| {
                let j = ends[e];
                let d = if t == 0 {
                    if n > 1 {
                        (pos[1][j] - pos[0][j]).norm()
                    } else {
                        0.0
                    }
                } else {
                    (pos[t][j] - pos[t - 1][j]).norm()
                };
                if d < threshold {
                    1.0
                } else {
                    0.0
                }
            })
        })
        .collect();
    Ok((0..n)
        .map(|t| {
            let lo = t.saturating_sub(2);
            let hi = (t + 3).min(n);
            std::array::from_fn(|e| raw[lo..hi].iter().map(|r| r[e]).sum::<f64>() / (hi - lo) as f64)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Gaussian noise on every reference Euler angle [deg].
    pub angle_sigma_deg: f64,
    /// Gaussian noise on each velocity component [m/s].
    pub velocity_sigma: f64,
    pub seed: u64,
    /// Use ground-truth contacts as stationary probabilities when available.
    pub use_contacts: bool,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            angle_sigma_deg: 0.0,
            velocity_sigma: 0.0,
            seed: 0,
            use_contacts: false,
        }
    }
}

impl NoiseSpec {
    /// Parses `angle=1,vel=0.05,seed=3,contacts` style specifications.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = NoiseSpec::default();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part.split_once('=').unwrap_or((part, ""));
            let num = || {
                value
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad value in noise spec: {part}")))
            };
            match key {
                "none" | "ideal" => {}
                "angle" => spec.angle_sigma_deg = num()?,
                "vel" | "velocity" => spec.velocity_sigma = num()?,
                "seed" => {
                    spec.seed = value
                        .parse()
                        .map_err(|_| Error::Config(format!("bad seed in noise spec: {part}")))?
                }
                "contacts" => spec.use_contacts = true,
                _ => return Err(Error::Config(format!("unknown noise spec key {key:?}"))),
            }
        }
        if spec.angle_sigma_deg < 0.0 || spec.velocity_sigma < 0.0 {
            return Err(Error::Config("noise levels must be non-negative".into()));
        }
        Ok(spec)
    }
}

pub const STATIONARY_THRESHOLD_M: f64 = 0.002;

/// Estimator-frame stream standing in for the learned estimators.
pub fn synthesize_estimator_frames(
    model: &SkeletonModel,
    motion: &MotionSequence,
    g_world: &Vector3<f64>,
    noise: &NoiseSpec,
) -> Result<Vec<EstimatorFrame>> {
    motion.validate(model)?;
    let n = motion.len();
    let dt = motion.dt();
    let g = g_world.normalize();
    let labels = match (&motion.contacts, noise.use_contacts) {
        (Some(c), true) => c.iter().map(|f| f.map(|b| if b { 1.0 } else { 0.0 })).collect(),
        _ => stationary_labels(model, motion, STATIONARY_THRESHOLD_M)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let angle_noise = Normal::new(0.0, noise.angle_sigma_deg.to_radians()).map_err(|e| Error::Config(e.to_string()))?;
    let vel_noise = Normal::new(0.0, noise.velocity_sigma).map_err(|e| Error::Config(e.to_string()))?;

    let mut frames = Vec::with_capacity(n);
    for t in 0..n {
        let mut v = if t == 0 {
            Vector3::zeros()
        } else {
            (motion.root[t] - motion.root[t - 1]) / dt
        };
        if noise.velocity_sigma > 0.0 {
            v += Vector3::new(vel_noise.sample(&mut rng), vel_noise.sample(&mut rng), vel_noise.sample(&mut rng));
        }
        let (v_par_mag, v_perp) = decompose_velocity(&v, &g);
        let mut theta = motion.angles[t].clone();
        if noise.angle_sigma_deg > 0.0 {
            for a in theta.iter_mut() {
                *a += angle_noise.sample(&mut rng);
            }
        }
        let r_root = euler_xyz(&Vector3::new(motion.angles[t][0], motion.angles[t][1], motion.angles[t][2]));
        frames.push(EstimatorFrame {
            timestamp: t as f64 * dt,
            theta_ref: theta,
            v_par_mag,
            v_perp,
            stationary: labels[t],
            g_root: Some(r_root.transpose() * g),
        });
    }
    Ok(frames)
}

fn min_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// Joint indices of one leg.
#[derive(Debug, Clone, Copy)]
struct Leg {
    hip: usize,
    knee: usize,
    ankle: usize,
    toe: usize,
}

struct Rig<'a> {
    model: &'a SkeletonModel,
    legs: [Leg; 2],
}

impl<'a> Rig<'a> {
    fn new(model: &'a SkeletonModel) -> Result<Self> {
        let leg = |side: &str| -> Result<Leg> {
            Ok(Leg {
                hip: find_joint(model, &format!("{side}_hip"))?,
                knee: find_joint(model, &format!("{side}_knee"))?,
                ankle: find_joint(model, &format!("{side}_ankle"))?,
                toe: find_joint(model, &format!("{side}_foot"))?,
            })
        };
        let rig = Rig {
            model,
            legs: [leg("left")?, leg("right")?],
        };
        for l in &rig.legs {
            let j = model.joints();
            if j[l.hip].parent != Some(0) || j[l.knee].parent != Some(l.hip) || j[l.ankle].parent != Some(l.knee) || j[l.toe].parent != Some(l.ankle) {
                return Err(Error::Config("leg joints must form root-hip-knee-ankle-foot chains".into()));
            }
        }
        Ok(rig)
    }

    fn offset(&self, j: usize) -> Vector3<f64> {
        self.model.joints()[j].offset
    }

    fn ankle_position(&self, leg: &Leg, root: &Vector3<f64>, x: &[f64; 3]) -> Vector3<f64> {
        let rh = euler_xyz(&Vector3::new(x[0], 0.0, x[1]));
        let rk = euler_xyz(&Vector3::new(x[2], 0.0, 0.0));
        root + self.offset(leg.hip) + rh * self.offset(leg.knee) + rh * rk * self.offset(leg.ankle)
    }

    /// Hip (x, z) and knee (x) angles that put the ankle on `target`, by
    /// damped Gauss-Newton from `guess`. The knee is kept flexed.
    fn solve_leg(&self, leg: &Leg, root: &Vector3<f64>, target: &Vector3<f64>, guess: [f64; 3]) -> Result<[f64; 3]> {
        let mut x = guess;
        for _ in 0..100 {
            let r = self.ankle_position(leg, root, &x) - target;
            if r.norm() < 1e-10 {
                return Ok(x);
            }
            let mut jac = Matrix3::zeros();
            for k in 0..3 {
                let mut xp = x;
                xp[k] += 1e-7;
                jac.set_column(k, &((self.ankle_position(leg, root, &xp) - target - r) / 1e-7));
            }
            let jtj = jac.transpose() * jac + Matrix3::identity() * 1e-9;
            let step = jtj.try_inverse().map(|inv| inv * jac.transpose() * r).unwrap_or_default();
            for k in 0..3 {
                x[k] -= step[k];
            }
            x[2] = x[2].clamp(1e-3, 2.6);
        }
        let r = (self.ankle_position(leg, root, &x) - target).norm();
        if r < 1e-6 {
            Ok(x)
        } else {
            Err(Error::Config(format!("foot target out of reach (miss {r:.4} m)")))
        }
    }

    /// Full pose with an upright, heading-free root and level feet whose toe
    /// joints sit on `toes`.
    fn pose(&self, root: &Vector3<f64>, toes: &[Vector3<f64>; 2], guess: &mut [[f64; 3]; 2]) -> Result<Vec<f64>> {
        let mut angles = vec![0.0; 3 * self.model.joint_count()];
        for (side, leg) in self.legs.iter().enumerate() {
            let ankle_target = toes[side] - self.offset(leg.toe);
            let x = self.solve_leg(leg, root, &ankle_target, guess[side])?;
            guess[side] = x;
            angles[3 * leg.hip] = x[0];
            angles[3 * leg.hip + 2] = x[1];
            angles[3 * leg.knee] = x[2];
            // Level foot: the ankle undoes the hip and knee rotations.
            let parent = euler_xyz(&Vector3::new(x[0], 0.0, x[1])) * euler_xyz(&Vector3::new(x[2], 0.0, 0.0));
            let e = euler_xyz_from_matrix(&parent.transpose());
            angles[3 * leg.ankle..3 * leg.ankle + 3].copy_from_slice(e.as_slice());
        }
        Ok(angles)
    }

    /// Toe positions of the rest pose, relative to the root.
    fn rest_toes(&self) -> [Vector3<f64>; 2] {
        self.legs.map(|l| self.offset(l.hip) + self.offset(l.knee) + self.offset(l.ankle) + self.offset(l.toe))
    }
}

/// Root and toe targets at one instant; the feet lift by `lift` on the way in.
#[derive(Debug, Clone, Copy)]
struct Key {
    t: f64,
    root: Vector3<f64>,
    toes: [Vector3<f64>; 2],
    lift: [f64; 2],
}

/// Named frame range of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub motion: MotionSequence,
    pub phases: Vec<Phase>,
    /// Height of the ground below the starting root [m].
    pub ground_height: f64,
}

impl Scenario {
    pub fn phases_labelled<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a Phase> + 'a {
        self.phases.iter().filter(move |p| p.label == label)
    }
}

pub const SCENARIO_NAMES: [&str; 7] = ["stand", "walk_in_place", "walk", "stair", "sit", "weight_shift", "calibration_walk"];

/// Root height above the support surface while standing [m].
const STANCE_HEIGHT: f64 = 0.88;
const FRAME_RATE: f64 = 60.0;
pub const STAIR_RISE: f64 = 0.15;
const STAIR_TREAD: f64 = 0.3;
pub const SEAT_HEIGHT: f64 = 0.45;
pub const WALK_STRIDE: f64 = 0.3;

struct Builder<'a> {
    rig: Rig<'a>,
    keys: Vec<Key>,
    /// (label, start time, end time)
    phases: Vec<(String, f64, f64)>,
    /// Frames where the pelvis is supported, as a time range.
    seated: Vec<(f64, f64)>,
    up: Vector3<f64>,
}

impl<'a> Builder<'a> {
    fn new(model: &'a SkeletonModel) -> Result<Self> {
        let rig = Rig::new(model)?;
        let ground = -STANCE_HEIGHT;
        let toes = rig.rest_toes().map(|p| Vector3::new(p.x, ground, p.z));
        Ok(Builder {
            rig,
            keys: vec![Key {
                t: 0.0,
                root: Vector3::zeros(),
                toes,
                lift: [0.0; 2],
            }],
            phases: Vec::new(),
            seated: Vec::new(),
            up: Vector3::y(),
        })
    }

    fn last(&self) -> Key {
        *self.keys.last().expect("builder always has a key")
    }

    fn hold(&mut self, duration: f64) -> &mut Self {
        let mut k = self.last();
        k.t += duration;
        k.lift = [0.0; 2];
        self.keys.push(k);
        self
    }

    fn to(&mut self, duration: f64, root: Option<Vector3<f64>>, toes: [Option<Vector3<f64>>; 2], lift: [f64; 2]) -> &mut Self {
        let prev = self.last();
        self.keys.push(Key {
            t: prev.t + duration,
            root: root.unwrap_or(prev.root),
            toes: [toes[0].unwrap_or(prev.toes[0]), toes[1].unwrap_or(prev.toes[1])],
            lift,
        });
        self
    }

    fn mark(&mut self, label: &str, from: f64, to: f64) {
        self.phases.push((label.to_string(), from, to));
    }

    fn now(&self) -> f64 {
        self.last().t
    }

    /// Step-to cycle: shift over the trailing foot, place the lead foot
    /// (lightly), move the weight onto it, then bring the trailing foot up.
    fn step_cycle(&mut self, lead: usize, advance: f64, rise: f64, lift: f64) {
        let trail = 1 - lead;
        let k = self.last();
        let surface = k.toes[lead].y;
        let over = |side: usize, k: &Key| k.toes[side].x * 0.6;

        let mut root = k.root;
        root.x = over(trail, &k);
        self.to(0.4, Some(root), [None, None], [0.0; 2]);

        let mut lead_toe = k.toes[lead];
        lead_toe.z += advance;
        lead_toe.y = surface + rise;
        let mut toes = [None, None];
        toes[lead] = Some(lead_toe);
        let mut lifts = [0.0; 2];
        lifts[lead] = lift;
        self.to(0.6, None, toes, lifts);

        let light_start = self.now();
        self.hold(0.6);
        self.mark("light", light_start, self.now());

        let shift_start = self.now();
        let mut root = self.last().root;
        root.z += 0.6 * advance;
        root.x = lead_toe.x * 0.6;
        self.to(0.8, Some(root), [None, None], [0.0; 2]);

        let mut trail_toe = k.toes[trail];
        trail_toe.z += advance;
        trail_toe.y = surface + rise;
        let mut toes = [None, None];
        toes[trail] = Some(trail_toe);
        let mut lifts = [0.0; 2];
        lifts[trail] = lift;
        let mut root = self.last().root;
        root.z = k.root.z + advance;
        root.y = k.root.y + rise;
        root.x = 0.0;
        self.to(0.6, Some(root), toes, lifts);
        self.hold(0.4);
        self.mark("shift", shift_start, self.now());
    }

    fn sample(&self, t: f64) -> (Vector3<f64>, [Vector3<f64>; 2], [bool; 2]) {
        let i = self.keys.partition_point(|k| k.t <= t).clamp(1, self.keys.len() - 1);
        let (a, b) = (&self.keys[i - 1], &self.keys[i]);
        if t >= b.t {
            return (b.root, b.toes, [true; 2]);
        }
        let tau = (t - a.t) / (b.t - a.t);
        let s = min_jerk(tau);
        let root = a.root + (b.root - a.root) * s;
        let mut toes = [Vector3::zeros(); 2];
        let mut planted = [true; 2];
        for f in 0..2 {
            toes[f] = a.toes[f] + (b.toes[f] - a.toes[f]) * s + self.up * (b.lift[f] * (std::f64::consts::PI * tau).sin());
            planted[f] = a.toes[f] == b.toes[f] && b.lift[f] == 0.0;
        }
        (root, toes, planted)
    }

    fn duration(&self) -> f64 {
        self.last().t
    }

    fn build(
        &self,
        name: &str,
        rate: f64,
        override_toes: impl Fn(f64) -> Option<[Vector3<f64>; 2]>,
    ) -> Result<Scenario> {
        let n = (self.duration() * rate).round() as usize + 1;
        let mut guess = [[-0.2, 0.0, 0.4]; 2];
        let mut root = Vec::with_capacity(n);
        let mut angles = Vec::with_capacity(n);
        let mut contacts = Vec::with_capacity(n);
        for f in 0..n {
            let t = f as f64 / rate;
            let (r, mut toes, mut planted) = self.sample(t);
            if let Some(o) = override_toes(t) {
                toes = o;
                planted = [false; 2];
            }
            angles.push(self.rig.pose(&r, &toes, &mut guess).map_err(|e| Error::Config(format!("{name} at t = {t:.3} s: {e}")))?);
            root.push(r);
            let seated = self.seated.iter().any(|(a, b)| t >= *a && t <= *b);
            let mut c = [false; 5];
            c[Endpoint::LeftFoot.index()] = planted[0];
            c[Endpoint::RightFoot.index()] = planted[1];
            c[Endpoint::Pelvis.index()] = seated;
            contacts.push(c);
        }
        let to_frame = |t: f64| ((t * rate).round() as usize).min(n - 1);
        Ok(Scenario {
            name: name.to_string(),
            motion: MotionSequence {
                frame_rate: rate,
                root,
                angles,
                contacts: Some(contacts),
            },
            phases: self
                .phases
                .iter()
                .map(|(l, a, b)| Phase {
                    label: l.clone(),
                    start: to_frame(*a),
                    end: to_frame(*b),
                })
                .collect(),
            ground_height: -STANCE_HEIGHT,
        })
    }
}

fn stand(model: &SkeletonModel) -> Result<Scenario> {
    let mut b = Builder::new(model)?;
    b.hold(10.0);
    b.mark("stand", 0.0, 10.0);
    b.build("stand", FRAME_RATE, |_| None)
}

fn walk(model: &SkeletonModel, name: &str, stride: f64, steps: usize) -> Result<Scenario> {
    let mut b = Builder::new(model)?;
    b.hold(0.5);
    for i in 0..steps {
        let start = b.now();
        b.step_cycle(i % 2, stride, 0.0, 0.1);
        b.mark("step", start, b.now());
    }
    b.hold(0.5);
    b.build(name, FRAME_RATE, |_| None)
}

fn stair(model: &SkeletonModel, steps: usize, hold_after: f64) -> Result<Scenario> {
    let mut b = Builder::new(model)?;
    b.hold(0.5);
    for i in 0..steps {
        let start = b.now();
        b.step_cycle(i % 2, STAIR_TREAD, STAIR_RISE, 0.12);
        b.mark("step", start, b.now());
    }
    b.hold(hold_after);
    b.build(if steps == 1 { "weight_shift" } else { "stair" }, FRAME_RATE, |_| None)
}

fn sit(model: &SkeletonModel) -> Result<Scenario> {
    let mut b = Builder::new(model)?;
    b.hold(1.0);
    let seat_root = Vector3::new(0.0, -STANCE_HEIGHT + SEAT_HEIGHT, -0.40);
    b.to(1.5, Some(seat_root), [None, None], [0.0; 2]);
    let seated_from = b.now();
    b.hold(1.0);
    b.mark("seated_planted", seated_from, b.now());
    let circle_start = b.now();
    let planted = b.last().toes;
    // Feet lift into a loop and keep circling until they land again.
    let (lift_in, circling, land) = (0.5, 3.0, 0.5);
    b.hold(lift_in + circling + land);
    b.mark("feet_circling", circle_start, circle_start + lift_in + circling + land);
    b.hold(1.0);
    b.seated.push((seated_from, b.now()));
    let up = b.up;
    let overrides = move |t: f64| -> Option<[Vector3<f64>; 2]> {
        let local = t - circle_start;
        if !(0.0..=lift_in + circling + land).contains(&local) {
            return None;
        }
        let radius = 0.08;
        let center_lift = 0.14;
        // Envelope raises the loop centre, then lowers it again.
        let env = if local < lift_in {
            min_jerk(local / lift_in)
        } else if local > lift_in + circling {
            1.0 - min_jerk((local - lift_in - circling) / land)
        } else {
            1.0
        };
        let phase = 2.0 * std::f64::consts::PI * local;
        Some(std::array::from_fn(|f| {
            let sign = if f == 0 { 1.0 } else { -1.0 };
            let dz = radius * (phase * sign).sin();
            let dy = radius * (1.0 - (phase * sign).cos());
            planted[f] + up * (center_lift * env + dy * env) + Vector3::z() * (dz * env) + Vector3::z() * (0.05 * env)
        }))
    };
    b.build("sit", FRAME_RATE, overrides)
}

/// Stand, one forward step, stand; sampled at 100 Hz for IMU synthesis.
fn calibration_walk(model: &SkeletonModel) -> Result<Scenario> {
    let mut b = Builder::new(model)?;
    b.hold(1.5);
    b.mark("first_stand", 0.0, 1.5);
    let start = b.now();
    let k = b.last();
    let stride = 0.6;
    let mut lead = k.toes[0];
    lead.z += stride;
    let mut root = k.root;
    root.z += 0.5 * stride;
    b.to(0.5, Some(root), [Some(lead), None], [0.08, 0.0]);
    let mut trail = k.toes[1];
    trail.z += stride;
    let mut root = k.root;
    root.z += stride;
    b.to(0.5, Some(root), [None, Some(trail)], [0.0, 0.08]);
    b.mark("step", start, b.now());
    let s2 = b.now();
    b.hold(1.5);
    b.mark("second_stand", s2, b.now());
    b.build("calibration_walk", 200.0, |_| None)
}

/// Builds one of [`SCENARIO_NAMES`] on the bundled humanoid topology.
pub fn scenario(model: &SkeletonModel, name: &str) -> Result<Scenario> {
    match name {
        "stand" => stand(model),
        "walk_in_place" => walk(model, "walk_in_place", 0.0, 6),
        "walk" => walk(model, "walk", WALK_STRIDE, 6),
        "stair" => stair(model, 3, 1.0),
        "sit" => sit(model),
        "weight_shift" => stair(model, 1, 1.5),
        "calibration_walk" => calibration_walk(model),
        _ => Err(Error::Config(format!(
            "unknown scenario {name:?}; expected one of {}",
            SCENARIO_NAMES.join(", ")
        ))),
    }
}

pub fn make_scenarios(model: &SkeletonModel) -> Result<Vec<Scenario>> {
    SCENARIO_NAMES.iter().map(|n| scenario(model, n)).collect()
}
