//! Pose error, jitter and translation drift.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::math::geodesic_angle;
use crate::skeleton::SkeletonModel;
use crate::synth::MotionSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alignment {
    /// Root position and orientation aligned per frame.
    Local,
    /// Root position aligned per frame.
    Global,
}

impl std::str::FromStr for Alignment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(Alignment::Local),
            "global" => Ok(Alignment::Global),
            _ => Err(Error::Config(format!("alignment must be local or global, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return MeanStd::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4} +- {:.4}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseErrors {
    pub sip_deg: MeanStd,
    pub ang_deg: MeanStd,
    pub pos_cm: MeanStd,
}

pub const SIP_JOINTS: [&str; 4] = ["left_hip", "right_hip", "left_shoulder", "right_shoulder"];

fn check_pair(model: &SkeletonModel, pred: &MotionSequence, truth: &MotionSequence) -> Result<()> {
    pred.validate(model)?;
    truth.validate(model)?;
    if pred.len() != truth.len() {
        return Err(Error::dim("predicted frames", truth.len(), pred.len()));
    }
    Ok(())
}

/// Per-frame joint errors averaged over joints, then summarized over frames.
pub fn pose_errors(
    model: &SkeletonModel,
    pred: &MotionSequence,
    truth: &MotionSequence,
    alignment: Alignment,
) -> Result<PoseErrors> {
    check_pair(model, pred, truth)?;
    let sip: Vec<usize> = SIP_JOINTS.iter().filter_map(|n| model.joint_index(n)).collect();
    let k = model.joint_count();
    let (mut sip_e, mut ang_e, mut pos_e) = (Vec::new(), Vec::new(), Vec::new());
    for t in 0..pred.len() {
        let a = model.pose_from_parts(&pred.root[t], &pred.angles[t])?;
        let b = model.pose_from_parts(&truth.root[t], &truth.angles[t])?;
        let (ra, rb) = match alignment {
            Alignment::Local => (a.rotations[0], b.rotations[0]),
            Alignment::Global => (Matrix3::identity(), Matrix3::identity()),
        };
        let rot_err = |j: usize| geodesic_angle(&(ra.transpose() * a.rotations[j]), &(rb.transpose() * b.rotations[j])).to_degrees();
        let angles: Vec<f64> = (0..k).map(rot_err).collect();
        ang_e.push(angles.iter().sum::<f64>() / k as f64);
        if !sip.is_empty() {
            sip_e.push(sip.iter().map(|&j| angles[j]).sum::<f64>() / sip.len() as f64);
        }
        let pos: f64 = (0..k)
            .map(|j| {
                let pa = ra.transpose() * (a.positions[j] - a.positions[0]);
                let pb = rb.transpose() * (b.positions[j] - b.positions[0]);
                (pa - pb).norm()
            })
            .sum::<f64>();
        pos_e.push(100.0 * pos / k as f64);
    }
    Ok(PoseErrors {
        sip_deg: MeanStd::of(&sip_e),
        ang_deg: MeanStd::of(&ang_e),
        pos_cm: MeanStd::of(&pos_e),
    })
}

/// Mean jerk magnitude of one trajectory, in 10³ m/s³.
pub fn jitter(positions: &[Vector3<f64>], dt: f64) -> Result<f64> {
    if positions.len() < 4 {
        return Err(Error::Config(format!("jitter needs at least 4 frames, got {}", positions.len())));
    }
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let n = positions.len() - 3;
    let total: f64 = positions
        .windows(4)
        .map(|w| (w[3] - w[2] * 3.0 + w[1] * 3.0 - w[0]).norm())
        .sum();
    Ok(total / (n as f64 * dt.powi(3)) * 1e-3)
}

/// Mean jitter over all joints; `frames[t][j]`.
pub fn joint_jitter(frames: &[Vec<Vector3<f64>>], dt: f64) -> Result<f64> {
    let k = frames.first().map_or(0, Vec::len);
    if k == 0 {
        return Err(Error::Config("no joints to measure".into()));
    }
    let mut sum = 0.0;
    for j in 0..k {
        let traj: Vec<Vector3<f64>> = frames.iter().map(|f| f[j]).collect();
        sum += jitter(&traj, dt)?;
    }
    Ok(sum / k as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Drift {
    /// (travelled distance of the truth [m], position error [m]) per frame.
    pub curve: Vec<(f64, f64)>,
    /// Error over distance at the reference distance [%].
    pub percent: f64,
    /// Distance at which `percent` was taken.
    pub at_distance: f64,
    /// False when the truth path is shorter than the reference distance; the
    /// last frame is used instead.
    pub reference_reached: bool,
}

pub const DRIFT_REFERENCE_M: f64 = 7.0;

pub fn translation_drift(pred: &[Vector3<f64>], truth: &[Vector3<f64>], reference_distance: f64) -> Result<Drift> {
    if pred.len() != truth.len() {
        return Err(Error::dim("predicted root frames", truth.len(), pred.len()));
    }
    if truth.is_empty() {
        return Err(Error::Config("empty trajectory".into()));
    }
    let mut dist = 0.0;
    let mut curve = Vec::with_capacity(truth.len());
    for t in 0..truth.len() {
        if t > 0 {
            dist += (truth[t] - truth[t - 1]).norm();
        }
        curve.push((dist, (pred[t] - truth[t]).norm()));
    }
    let hit = curve.iter().position(|(d, _)| *d >= reference_distance - 1e-9);
    let reference_reached = hit.is_some();
    let (at_distance, err) = curve[hit.unwrap_or(curve.len() - 1)];
    let percent = if at_distance > 0.0 { 100.0 * err / at_distance } else { 0.0 };
    Ok(Drift {
        curve,
        percent,
        at_distance,
        reference_reached,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub alignment: Alignment,
    pub errors: PoseErrors,
    pub root_jitter: f64,
    pub joint_jitter: f64,
    pub drift: Drift,
}

pub fn evaluate(
    model: &SkeletonModel,
    pred: &MotionSequence,
    truth: &MotionSequence,
    alignment: Alignment,
    reference_distance: f64,
) -> Result<EvalReport> {
    check_pair(model, pred, truth)?;
    let errors = pose_errors(model, pred, truth, alignment)?;
    let joints = pred.joint_positions(model)?;
    let dt = pred.dt();
    Ok(EvalReport {
        alignment,
        errors,
        root_jitter: jitter(&pred.root, dt)?,
        joint_jitter: joint_jitter(&joints, dt)?,
        drift: translation_drift(&pred.root, &truth.root, reference_distance)?,
    })
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "alignment      {:?}", self.alignment);
        let _ = writeln!(s, "sip_error_deg  {}", self.errors.sip_deg);
        let _ = writeln!(s, "ang_error_deg  {}", self.errors.ang_deg);
        let _ = writeln!(s, "pos_error_cm   {}", self.errors.pos_cm);
        let _ = writeln!(s, "root_jitter    {:.4}", self.root_jitter);
        let _ = writeln!(s, "joint_jitter   {:.4}", self.joint_jitter);
        let _ = writeln!(
            s,
            "drift_percent  {:.4} at {:.3} m{}",
            self.drift.percent,
            self.drift.at_distance,
            if self.drift.reference_reached { "" } else { " (path shorter than reference)" }
        );
        s
    }

    pub fn drift_csv(&self) -> String {
        let mut s = String::from("distance_m,error_m\n");
        for (d, e) in &self.drift.curve {
            let _ = writeln!(s, "{d:.6},{e:.6}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{euler_xyz, euler_xyz_from_matrix, rot_y};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sequence(model: &SkeletonModel, n: usize, seed: u64) -> MotionSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = model.joint_count();
        MotionSequence {
            frame_rate: 60.0,
            root: (0..n).map(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0), 0.0)).collect(),
            angles: (0..n).map(|_| (0..3 * k).map(|_| rng.random_range(-0.5..0.5)).collect()).collect(),
            contacts: None,
        }
    }

    #[test]
    fn identical_is_zero() {
        let m = SkeletonModel::humanoid();
        let s = sequence(&m, 5, 1);
        for a in [Alignment::Local, Alignment::Global] {
            let e = pose_errors(&m, &s, &s, a).unwrap();
            assert!(e.sip_deg.mean < 1e-6 && e.ang_deg.mean < 1e-6 && e.pos_cm.mean < 1e-9);
        }
    }

    #[test]
    fn yawed_root_alignment() {
        let m = SkeletonModel::humanoid();
        let truth = sequence(&m, 4, 2);
        let mut pred = truth.clone();
        for a in pred.angles.iter_mut() {
            let r = rot_y(30f64.to_radians()) * euler_xyz(&Vector3::new(a[0], a[1], a[2]));
            a[..3].copy_from_slice(euler_xyz_from_matrix(&r).as_slice());
        }
        let local = pose_errors(&m, &pred, &truth, Alignment::Local).unwrap();
        assert!(local.ang_deg.mean < 1e-6 && local.pos_cm.mean < 1e-6);
        let global = pose_errors(&m, &pred, &truth, Alignment::Global).unwrap();
        assert!((global.ang_deg.mean - 30.0).abs() < 1e-6);
        assert!(global.ang_deg.std < 1e-6);
        assert!((global.sip_deg.mean - 30.0).abs() < 1e-6);
    }

    #[test]
    fn constant_velocity_and_acceleration_have_no_jerk() {
        let dt = 1.0 / 60.0;
        let lin: Vec<_> = (0..20).map(|i| Vector3::new(1.0, 2.0, 3.0) * (i as f64 * dt)).collect();
        assert!(jitter(&lin, dt).unwrap() < 1e-6);
        let quad: Vec<_> = (0..20).map(|i| Vector3::new(0.5, -2.0, 1.0) * (i as f64 * dt).powi(2)).collect();
        assert!(jitter(&quad, dt).unwrap() < 1e-6);
        assert!(jitter(&quad[..3], dt).is_err());
    }

    #[test]
    fn drift_arithmetic() {
        let truth: Vec<_> = (0..=700).map(|i| Vector3::new(0.0, 0.0, i as f64 * 0.01)).collect();
        let pred: Vec<_> = truth.iter().map(|p| p + Vector3::new(0.07, 0.0, 0.0)).collect();
        let d = translation_drift(&pred, &truth, 7.0).unwrap();
        assert!(d.reference_reached);
        assert!((d.percent - 1.0).abs() < 1e-9);
        let d = translation_drift(&truth, &truth, 7.0).unwrap();
        assert_eq!(d.percent, 0.0);
        let short = translation_drift(&pred[..101], &truth[..101], 7.0).unwrap();
        assert!(!short.reference_reached);
        assert!((short.at_distance - 1.0).abs() < 1e-9);
    }

    #[test]
    fn report_formats() {
        let m = SkeletonModel::humanoid();
        let s = sequence(&m, 6, 3);
        let r = evaluate(&m, &s, &s, Alignment::Global, 7.0).unwrap();
        let text = r.to_text();
        assert!(text.contains("sip_error_deg"));
        assert_eq!(r.drift_csv().lines().count(), 7);
        assert_eq!("local".parse::<Alignment>().unwrap(), Alignment::Local);
        assert!("both".parse::<Alignment>().is_err());
    }
}
