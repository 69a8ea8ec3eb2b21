//! Contact identification, contact-force estimation and reference adjustment.

use log::debug;
use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::dynamics::DynamicsModel;
use crate::error::{Error, Result};
use crate::math::tangent_basis;
use crate::skeleton::{Endpoint, Pose};
use crate::solver::nnls_partial;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactStatus {
    Free,
    Potential,
    Contact,
}

impl ContactStatus {
    pub fn name(self) -> &'static str {
        match self {
            ContactStatus::Free => "free",
            ContactStatus::Potential => "potential",
            ContactStatus::Contact => "contact",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndpointContact {
    pub status: ContactStatus,
    /// Height of the surface the endpoint rests (or last rested) on.
    pub surface_height: Option<f64>,
    pub counter: u32,
    /// Force applied at the endpoint in the last solve [N].
    pub lambda: Vector3<f64>,
}

impl Default for EndpointContact {
    fn default() -> Self {
        EndpointContact {
            status: ContactStatus::Free,
            surface_height: None,
            counter: 0,
            lambda: Vector3::zeros(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContactSet {
    pub entries: [EndpointContact; 5],
}

impl ContactSet {
    pub fn get(&self, e: Endpoint) -> &EndpointContact {
        &self.entries[e.index()]
    }

    pub fn get_mut(&mut self, e: Endpoint) -> &mut EndpointContact {
        &mut self.entries[e.index()]
    }

    pub fn with_status(&self, status: ContactStatus) -> Vec<Endpoint> {
        Endpoint::ALL
            .into_iter()
            .filter(|e| self.get(*e).status == status)
            .collect()
    }

    pub fn contacts(&self) -> Vec<Endpoint> {
        self.with_status(ContactStatus::Contact)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactConfig {
    pub beta_lambda: f64,
    pub mu: f64,
    pub e_th: f64,
    pub stationary_threshold: f64,
    pub height_tolerance: f64,
    pub counter_threshold: u32,
    pub pyramid_edges: usize,
    /// Horizontal distance under which two stationary endpoints count as neighbours [m].
    pub pairing_distance: f64,
}

impl Default for ContactConfig {
    fn default() -> Self {
        ContactConfig {
            beta_lambda: 0.4,
            mu: 0.7,
            e_th: 400.0,
            stationary_threshold: 0.7,
            height_tolerance: 0.05,
            counter_threshold: 5,
            pyramid_edges: 4,
            pairing_distance: 0.3,
        }
    }
}

impl ContactConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("beta_lambda", self.beta_lambda),
            ("mu", self.mu),
            ("e_th", self.e_th),
            ("height_tolerance", self.height_tolerance),
            ("pairing_distance", self.pairing_distance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.stationary_threshold > 0.0 && self.stationary_threshold < 1.0) {
            return Err(Error::Config(format!(
                "stationary_threshold must lie in (0, 1), got {}",
                self.stationary_threshold
            )));
        }
        if self.counter_threshold == 0 {
            return Err(Error::Config("counter_threshold must be at least 1".into()));
        }
        if self.pyramid_edges != 4 {
            return Err(Error::Config(format!(
                "only 4-edge friction pyramids are supported, got {}",
                self.pyramid_edges
            )));
        }
        Ok(())
    }
}

/// Height of a point along `up`.
pub fn height(p: &Vector3<f64>, up: &Vector3<f64>) -> f64 {
    up.dot(p)
}

fn horizontal_distance(a: &Vector3<f64>, b: &Vector3<f64>, up: &Vector3<f64>) -> f64 {
    let d = a - b;
    (d - up * up.dot(&d)).norm()
}

/// Rule-based labelling of the five endpoints.
///
/// A stationary endpoint is a contact when it was one in the previous frame or
/// touches the ground or the surface it last rested on. Stationary endpoints
/// next to a contact at the same height become contacts too; the remaining
/// stationary endpoints are potentials. Non-stationary endpoints are freed.
pub fn mark_contacts(
    set: &ContactSet,
    s: &[f64; 5],
    positions: &[Vector3<f64>; 5],
    up: &Vector3<f64>,
    ground_height: f64,
    config: &ContactConfig,
) -> ContactSet {
    let tol = config.height_tolerance;
    let mut out = *set;
    for e in Endpoint::ALL {
        let i = e.index();
        let prev = set.entries[i];
        let entry = &mut out.entries[i];
        entry.lambda = Vector3::zeros();
        if s[i] <= config.stationary_threshold {
            entry.status = ContactStatus::Free;
            entry.counter = 0;
            continue;
        }
        let h = height(&positions[i], up);
        if prev.status == ContactStatus::Contact {
            continue;
        }
        if h - ground_height <= tol {
            entry.status = ContactStatus::Contact;
            entry.surface_height = Some(ground_height);
        } else if prev.surface_height.is_some_and(|sh| h - sh <= tol && sh - h <= tol) {
            entry.status = ContactStatus::Contact;
        } else {
            entry.status = ContactStatus::Potential;
        }
    }

    // Pairing rule, repeated until no endpoint changes.
    loop {
        let mut changed = false;
        for i in 0..5 {
            if out.entries[i].status != ContactStatus::Potential {
                continue;
            }
            let hi = height(&positions[i], up);
            let partner = (0..5).find(|&j| {
                out.entries[j].status == ContactStatus::Contact
                    && horizontal_distance(&positions[i], &positions[j], up) <= config.pairing_distance
                    && (height(&positions[j], up) - hi).abs() <= config.height_tolerance
            });
            if let Some(j) = partner {
                out.entries[i].status = ContactStatus::Contact;
                out.entries[i].surface_height = out.entries[j].surface_height;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    out
}

/// Force model for one contact joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForceModel {
    /// Linearized friction cone around the up direction.
    Cone,
    /// Any force (grasping hands).
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPoint {
    pub endpoint: Endpoint,
    pub joint: usize,
    pub model: ForceModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactForces {
    /// One force per contact point, in the same order.
    pub lambda: Vec<Vector3<f64>>,
    /// `e = τ[0..6] - (Jᵀλ)[0..6]`
    pub residual: Vector6<f64>,
}

impl ContactForces {
    pub fn residual_norm(&self) -> f64 {
        self.residual.norm()
    }
}

/// Root rows of `Jᵀ` for the contact joints: a 6 × 3c matrix.
pub fn root_wrench_map(model: &DynamicsModel, pose: &Pose, joints: &[usize]) -> DMatrix<f64> {
    let sk = &model.skeleton;
    let mut g = DMatrix::zeros(6, 3 * joints.len());
    for (c, &j) in joints.iter().enumerate() {
        let jac = sk.point_jacobian(pose, j);
        g.view_mut((0, 3 * c), (6, 3)).copy_from(&jac.view((0, 0), (3, 6)).transpose());
    }
    g
}

/// Pyramid edge directions `n ± μ t₁`, `n ± μ t₂`.
pub fn pyramid_edges(up: &Vector3<f64>, mu: f64) -> [Vector3<f64>; 4] {
    let (t1, t2) = tangent_basis(up);
    [up + t1 * mu, up - t1 * mu, up + t2 * mu, up - t2 * mu]
}

/// Basis mapping weights to contact forces (3c × w), with a mask of the
/// weights that are unconstrained (free forces) rather than nonnegative.
fn force_basis(points: &[ContactPoint], up: &Vector3<f64>, mu: f64) -> (DMatrix<f64>, Vec<bool>) {
    let cols: usize = points
        .iter()
        .map(|p| match p.model {
            ForceModel::Cone => 4,
            ForceModel::Free => 3,
        })
        .sum();
    let mut b = DMatrix::zeros(3 * points.len(), cols);
    let mut free = vec![false; cols];
    let edges = pyramid_edges(up, mu);
    let mut col = 0;
    for (c, p) in points.iter().enumerate() {
        match p.model {
            ForceModel::Cone => {
                for e in &edges {
                    b.fixed_view_mut::<3, 1>(3 * c, col).copy_from(e);
                    col += 1;
                }
            }
            ForceModel::Free => {
                for a in 0..3 {
                    b[(3 * c + a, col)] = 1.0;
                    free[col] = true;
                    col += 1;
                }
            }
        }
    }
    (b, free)
}

/// `e = τ[0..6] - G λ`
pub fn residual_after(tau_root: &Vector6<f64>, g: &DMatrix<f64>, lambda: &DVector<f64>) -> Vector6<f64> {
    let explained = g * lambda;
    tau_root - Vector6::from_iterator(explained.iter().copied())
}

/// Minimizes `‖G λ - τ[0..6]‖² + β ‖λ‖²` with cone joints kept inside the
/// friction pyramid, as a least-squares problem over nonnegative edge weights
/// and unconstrained free-force components.
pub fn solve_contact_forces(
    model: &DynamicsModel,
    pose: &Pose,
    points: &[ContactPoint],
    tau_root: &Vector6<f64>,
    config: &ContactConfig,
) -> Result<ContactForces> {
    if points.is_empty() {
        return Ok(ContactForces {
            lambda: Vec::new(),
            residual: *tau_root,
        });
    }
    let joints: Vec<usize> = points.iter().map(|p| p.joint).collect();
    let g = root_wrench_map(model, pose, &joints);
    let (basis, free) = force_basis(points, &model.up(), config.mu);
    let w_cols = basis.ncols();
    let mut a = DMatrix::zeros(6 + basis.nrows(), w_cols);
    a.rows_mut(0, 6).copy_from(&(&g * &basis));
    a.rows_mut(6, basis.nrows()).copy_from(&(&basis * config.beta_lambda.sqrt()));
    let mut b = DVector::zeros(6 + basis.nrows());
    b.rows_mut(0, 6).copy_from(tau_root);
    let w = nnls_partial(&a, &b, &free)?;
    let lam = &basis * w;
    let residual = residual_after(tau_root, &g, &lam);
    let lambda = (0..points.len())
        .map(|c| Vector3::new(lam[3 * c], lam[3 * c + 1], lam[3 * c + 2]))
        .collect();
    Ok(ContactForces { lambda, residual })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactEvent {
    pub endpoint: Endpoint,
    pub residual_before: f64,
    pub residual_after: f64,
    pub accepted: bool,
    /// The acceptance pushed the counter to the threshold.
    pub promoted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactEstimate {
    pub set: ContactSet,
    /// Residual after the acceptance loop (true contacts plus accepted potentials).
    pub search_residual: Vector6<f64>,
    /// True contacts, in endpoint order, with the forces used for re-tracking.
    pub points: Vec<ContactPoint>,
    pub forces: ContactForces,
    pub events: Vec<ContactEvent>,
}

fn contact_point(model: &DynamicsModel, e: Endpoint, h: f64, ground_height: f64, tol: f64) -> ContactPoint {
    let on_ground = h - ground_height <= tol;
    ContactPoint {
        endpoint: e,
        joint: model.skeleton.endpoint_joint(e),
        model: if e.is_hand() && !on_ground {
            ForceModel::Free
        } else {
            ForceModel::Cone
        },
    }
}

/// Iterative potential-contact acceptance.
///
/// Starting from the true contacts, potentials are tried nearest-to-ground
/// first while `‖e‖ > e_th`. A potential is accepted when it more than halves
/// `‖e‖`. Accepted potentials advance their counter and become contacts (with
/// a proxy surface at their current height) once it reaches the threshold;
/// every other potential has its counter cleared.
pub fn estimate_contacts(
    model: &DynamicsModel,
    pose: &Pose,
    set: &ContactSet,
    tau_root: &Vector6<f64>,
    ground_height: f64,
    config: &ContactConfig,
) -> Result<ContactEstimate> {
    let up = model.up();
    let ends = model.skeleton.endpoint_joints();
    let heights: [f64; 5] = ends.map(|j| height(&pose.positions[j], &up));
    let point = |e: Endpoint| contact_point(model, e, heights[e.index()], ground_height, config.height_tolerance);

    let mut out = *set;
    let mut active: Vec<Endpoint> = set.contacts();
    let solve = |act: &[Endpoint]| {
        let mut sorted = act.to_vec();
        sorted.sort_by_key(|e| e.index());
        let pts: Vec<ContactPoint> = sorted.iter().map(|&e| point(e)).collect();
        solve_contact_forces(model, pose, &pts, tau_root, config)
    };
    let mut current = solve(&active)?;

    let mut potentials = set.with_status(ContactStatus::Potential);
    potentials.sort_by(|a, b| {
        let da = (heights[a.index()] - ground_height).abs();
        let db = (heights[b.index()] - ground_height).abs();
        da.total_cmp(&db).then(a.index().cmp(&b.index()))
    });

    let mut accepted_now = [false; 5];
    let mut events = Vec::new();
    for e in potentials {
        let before = current.residual_norm();
        if before <= config.e_th {
            break;
        }
        let mut trial = active.clone();
        trial.push(e);
        let cand = solve(&trial)?;
        let after = cand.residual_norm();
        let accepted = after < 0.5 * before;
        let mut promoted = false;
        if accepted {
            active = trial;
            current = cand;
            accepted_now[e.index()] = true;
            let entry = out.get_mut(e);
            entry.counter += 1;
            if entry.counter >= config.counter_threshold {
                entry.status = ContactStatus::Contact;
                entry.surface_height = Some(heights[e.index()]);
                promoted = true;
            }
        }
        debug!(
            "{}: residual {before:.1} -> {after:.1}, {}",
            e.name(),
            if accepted { "accepted" } else { "rejected" }
        );
        events.push(ContactEvent {
            endpoint: e,
            residual_before: before,
            residual_after: after,
            accepted,
            promoted,
        });
    }
    for e in Endpoint::ALL {
        let entry = out.get_mut(e);
        if entry.status == ContactStatus::Potential && !accepted_now[e.index()] {
            entry.counter = 0;
        }
    }

    let search_residual = current.residual;
    let contacts = out.contacts();
    let forces = if contacts.len() == active.len() {
        current
    } else {
        solve(&contacts)?
    };
    let points: Vec<ContactPoint> = contacts.iter().map(|&e| point(e)).collect();
    for e in Endpoint::ALL {
        out.get_mut(e).lambda = Vector3::zeros();
    }
    for (p, f) in points.iter().zip(&forces.lambda) {
        out.get_mut(p.endpoint).lambda = *f;
    }
    Ok(ContactEstimate {
        set: out,
        search_residual,
        points,
        forces,
        events,
    })
}

/// Pulls contact endpoints toward their surfaces in the reference positions.
///
/// An endpoint above its surface by at most `d_th` loses `pull_factor` of the
/// gap; one below is moved onto the surface.
pub fn adjust_references(
    r_ref: &mut [Vector3<f64>],
    endpoint_joints: &[usize; 5],
    set: &ContactSet,
    up: &Vector3<f64>,
    d_th: f64,
    pull_factor: f64,
) {
    for e in set.contacts() {
        let Some(surface) = set.get(e).surface_height else { continue };
        let j = endpoint_joints[e.index()];
        let gap = height(&r_ref[j], up) - surface;
        if gap < 0.0 {
            r_ref[j] -= up * gap;
        } else if gap <= d_th {
            r_ref[j] -= up * (gap * pull_factor);
        }
    }
}
