//! Per-frame capture loop: translation refinement, double tracking with
//! contact estimation, and integration.

use std::path::PathBuf;
use std::sync::mpsc::sync_channel;
use std::time::{Duration, Instant};

use log::{debug, warn};
use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::contact::{adjust_references, estimate_contacts, height, mark_contacts, ContactConfig, ContactEvent, ContactSet};
use crate::dynamics::{DynamicsModel, DEFAULT_GRAVITY};
use crate::error::{Error, Result};
use crate::gravity::correct_root_orientation;
use crate::math::{euler_xyz, euler_xyz_from_matrix};
use crate::skeleton::{compose_q, CharacterState, SkeletonModel};
use crate::tracking::{angular_pd, build_reference, integrate_with, linear_pd, pretrack, retrack, FrameDynamics, TrackingConfig};
use crate::translation::{assemble_velocity, refine_velocity, EstimatorFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Skeleton file; the bundled humanoid when absent.
    pub skeleton: Option<PathBuf>,
    pub tracking: TrackingConfig,
    pub contact: ContactConfig,
    /// Gravity magnitude [m/s²], acting along -y.
    pub gravity: f64,
    /// Apply the per-frame gravity refinement to the root orientation.
    pub refine_gravity: bool,
    /// Ground height override; the lowest joint of the first frame otherwise.
    pub ground_height: Option<f64>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Seed for synthetic data generation.
    pub seed: u64,
    /// Frames buffered between the reader thread and the frame loop.
    pub queue_capacity: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            skeleton: None,
            tracking: TrackingConfig::default(),
            contact: ContactConfig::default(),
            gravity: DEFAULT_GRAVITY,
            refine_gravity: true,
            ground_height: None,
            input: None,
            output: None,
            seed: 0,
            queue_capacity: 64,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.tracking.validate()?;
        self.contact.validate()?;
        if !(self.gravity > 0.0 && self.gravity.is_finite()) {
            return Err(Error::Config(format!("gravity must be positive, got {}", self.gravity)));
        }
        if self.queue_capacity == 0 {
            return Err(Error::Config("queue_capacity must be at least 1".into()));
        }
        for p in [&self.skeleton, &self.input].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn load_skeleton(&self) -> Result<SkeletonModel> {
        match &self.skeleton {
            Some(p) => SkeletonModel::load(p),
            None => Ok(SkeletonModel::humanoid()),
        }
    }

    pub fn dynamics_model(&self) -> Result<DynamicsModel> {
        Ok(DynamicsModel::with_gravity(self.load_skeleton()?, Vector3::new(0.0, -self.gravity, 0.0)))
    }
}

/// Everything emitted for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub index: usize,
    pub timestamp: f64,
    pub state: CharacterState,
    /// Contact states with the forces applied in re-tracking.
    pub contacts: ContactSet,
    /// Re-tracking generalized forces; the first six entries are the root residual.
    pub tau: DVector<f64>,
    /// Root residual of pre-tracking.
    pub pretrack_residual: Vector6<f64>,
    /// `‖e‖` left after the contact forces of this frame.
    pub contact_residual: f64,
    pub events: Vec<ContactEvent>,
    /// Reason the frame was dropped, if it was.
    pub dropped: Option<String>,
}

impl FrameOutput {
    pub fn root_residual(&self) -> Vector6<f64> {
        if self.tau.len() >= 6 {
            self.tau.fixed_rows::<6>(0).into_owned()
        } else {
            Vector6::zeros()
        }
    }
}

/// Tracker state carried between frames.
#[derive(Debug, Clone)]
pub struct Session {
    pub model: DynamicsModel,
    pub tracking: TrackingConfig,
    pub contact: ContactConfig,
    pub refine_gravity: bool,
    pub state: CharacterState,
    pub ground_height: f64,
    pub contacts: ContactSet,
    prev_theta: Option<Vec<f64>>,
    frames: usize,
}

/// Lowest joint height of a configuration.
pub fn lowest_joint_height(model: &DynamicsModel, q: &DVector<f64>) -> Result<f64> {
    let up = model.up();
    Ok(model
        .skeleton
        .pose(q)?
        .positions
        .iter()
        .map(|p| height(p, &up))
        .fold(f64::INFINITY, f64::min))
}

/// Root at the origin, pose from the first frame, at rest; the ground is the
/// lowest joint unless overridden.
pub fn initialize_session(model: DynamicsModel, first: &EstimatorFrame, config: &PipelineConfig) -> Result<Session> {
    config.tracking.validate()?;
    config.contact.validate()?;
    first.validate(&model.skeleton)?;
    let q = compose_q(&Vector3::zeros(), &first.theta_ref);
    let ground_height = match config.ground_height {
        Some(h) => h,
        None => lowest_joint_height(&model, &q)?,
    };
    let n = q.len();
    Ok(Session {
        model,
        tracking: config.tracking.clone(),
        contact: config.contact.clone(),
        refine_gravity: config.refine_gravity,
        state: CharacterState { q, qdot: DVector::zeros(n) },
        ground_height,
        contacts: ContactSet::default(),
        prev_theta: None,
        frames: 0,
    })
}

struct Stepped {
    state: CharacterState,
    contacts: ContactSet,
    tau: DVector<f64>,
    pretrack_residual: Vector6<f64>,
    contact_residual: f64,
    events: Vec<ContactEvent>,
    theta: Vec<f64>,
}

impl Session {
    /// Reference angles with the root tilt replaced by the refined gravity.
    fn corrected_theta(&self, frame: &EstimatorFrame) -> Vec<f64> {
        let mut theta = frame.theta_ref.clone();
        if let (true, Some(g_root)) = (self.refine_gravity, frame.g_root) {
            if g_root.norm() > 1e-9 {
                let g_world = -self.model.up();
                let r = euler_xyz(&Vector3::new(theta[0], theta[1], theta[2]));
                let g_prev = r.transpose() * g_world;
                let fixed = correct_root_orientation(&r, &g_root.normalize(), &g_prev);
                theta[..3].copy_from_slice(euler_xyz_from_matrix(&fixed).as_slice());
            }
        }
        theta
    }

    fn try_step(&self, frame: &EstimatorFrame) -> Result<Stepped> {
        let sk = &self.model.skeleton;
        frame.validate(sk)?;
        let cfg = &self.tracking;
        let dt = cfg.dt;
        let up = self.model.up();
        let theta = self.corrected_theta(frame);
        let prev = self.prev_theta.as_deref().unwrap_or(&theta);

        let v = assemble_velocity(frame.v_par_mag, &frame.v_perp, &-up);
        let v_ref = refine_velocity(sk, &theta, prev, &v, &frame.stationary, dt)?;

        let fd = FrameDynamics::new(&self.model, &self.state)?;
        let r = fd.positions();
        let p = self.state.root_position();
        let mut r_ref = build_reference(sk, &theta, &p, &v_ref, r, &frame.stationary, dt)?;
        let theta_ddot = angular_pd(cfg, &theta, &self.state.q, &self.state.qdot)?;
        let r_ddot = linear_pd(cfg, &r_ref, r, &fd.rdot)?;
        let pre = pretrack(&fd, cfg, &theta_ddot, &r_ddot)?;
        let tau6 = pre.residual_root();

        let ends = sk.endpoint_joints();
        let end_pos = ends.map(|j| r[j]);
        let marked = mark_contacts(&self.contacts, &frame.stationary, &end_pos, &up, self.ground_height, &self.contact);
        let est = estimate_contacts(&self.model, &fd.pose, &marked, &tau6, self.ground_height, &self.contact)?;

        adjust_references(&mut r_ref, &ends, &est.set, &up, cfg.d_th, cfg.pull_factor);
        let r_ddot_star = linear_pd(cfg, &r_ref, r, &fd.rdot)?;

        let n = self.model.dof();
        let mut jc = DMatrix::zeros(3 * est.points.len(), n);
        let mut lambda = DVector::zeros(3 * est.points.len());
        for (k, (pt, f)) in est.points.iter().zip(&est.forces.lambda).enumerate() {
            jc.view_mut((3 * k, 0), (3, n)).copy_from(&sk.point_jacobian(&fd.pose, pt.joint));
            lambda.fixed_rows_mut::<3>(3 * k).copy_from(f);
        }
        let post = retrack(&fd, cfg, &theta_ddot, &r_ddot_star, &lambda, &jc)?;
        let state = integrate_with(cfg.integrator, &self.state, &post.qddot, dt)?;
        if !state.q.iter().chain(state.qdot.iter()).all(|x| x.is_finite()) {
            return Err(Error::Numerical("integration produced a non-finite state".into()));
        }
        Ok(Stepped {
            state,
            contacts: est.set,
            tau: post.tau,
            pretrack_residual: tau6,
            contact_residual: est.forces.residual_norm(),
            events: est.events,
            theta,
        })
    }

    /// Processes one frame. Failures drop the frame: the previous state and
    /// contacts are kept and the output is flagged.
    pub fn step(&mut self, frame: &EstimatorFrame) -> FrameOutput {
        let index = self.frames;
        self.frames += 1;
        match self.try_step(frame) {
            Ok(s) => {
                self.state = s.state;
                self.contacts = s.contacts;
                self.prev_theta = Some(s.theta);
                FrameOutput {
                    index,
                    timestamp: frame.timestamp,
                    state: self.state.clone(),
                    contacts: self.contacts,
                    tau: s.tau,
                    pretrack_residual: s.pretrack_residual,
                    contact_residual: s.contact_residual,
                    events: s.events,
                    dropped: None,
                }
            }
            Err(e) => {
                warn!("frame {index} dropped: {e}");
                FrameOutput {
                    index,
                    timestamp: frame.timestamp,
                    state: self.state.clone(),
                    contacts: self.contacts,
                    tau: DVector::zeros(self.model.dof()),
                    pretrack_residual: Vector6::zeros(),
                    contact_residual: f64::NAN,
                    events: Vec::new(),
                    dropped: Some(e.to_string()),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Timing {
    pub frames: usize,
    pub dropped: usize,
    pub total: Duration,
    pub max: Duration,
}

impl Timing {
    pub fn mean_ms(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.total.as_secs_f64() * 1e3 / self.frames as f64
        }
    }

    pub fn max_ms(&self) -> f64 {
        self.max.as_secs_f64() * 1e3
    }

    fn record(&mut self, d: Duration, dropped: bool) {
        self.frames += 1;
        self.total += d;
        self.max = self.max.max(d);
        if dropped {
            self.dropped += 1;
        }
    }
}

/// Runs frames in order, handing each output to `sink`. The first frame
/// initializes the session.
pub fn run_pipeline<I, F>(model: DynamicsModel, config: &PipelineConfig, frames: I, mut sink: F) -> Result<Timing>
where
    I: IntoIterator<Item = Result<EstimatorFrame>>,
    F: FnMut(&FrameOutput) -> Result<()>,
{
    let mut frames = frames.into_iter();
    let Some(first) = frames.next() else {
        return Err(Error::Config("no estimator frames".into()));
    };
    let first = first?;
    let mut session = initialize_session(model, &first, config)?;
    debug!("ground height {:.4} m", session.ground_height);
    let mut timing = Timing::default();
    for frame in std::iter::once(Ok(first)).chain(frames) {
        let frame = frame?;
        let start = Instant::now();
        let out = session.step(&frame);
        timing.record(start.elapsed(), out.dropped.is_some());
        sink(&out)?;
    }
    Ok(timing)
}

/// [`run_pipeline`] with the source read on its own thread through a bounded queue.
pub fn run_pipeline_threaded<I, F>(model: DynamicsModel, config: &PipelineConfig, source: I, sink: F) -> Result<Timing>
where
    I: IntoIterator<Item = Result<EstimatorFrame>> + Send,
    I::IntoIter: Send,
    F: FnMut(&FrameOutput) -> Result<()>,
{
    let (tx, rx) = sync_channel(config.queue_capacity.max(1));
    std::thread::scope(|scope| {
        scope.spawn(move || {
            for item in source {
                let stop = item.is_err();
                if tx.send(item).is_err() || stop {
                    break;
                }
            }
        });
        run_pipeline(model, config, rx, sink)
    })
}

/// Collects all outputs of a finite frame sequence.
pub fn track_all(model: DynamicsModel, config: &PipelineConfig, frames: &[EstimatorFrame]) -> Result<(Vec<FrameOutput>, Timing)> {
    let mut out = Vec::with_capacity(frames.len());
    let timing = run_pipeline(model, config, frames.iter().cloned().map(Ok), |o| {
        out.push(o.clone());
        Ok(())
    })?;
    Ok((out, timing))
}
