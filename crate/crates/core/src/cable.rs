//! Cable state, contact with the box, and tension allocation.

use std::f64::consts::FRAC_PI_6;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{AppliedForce, BoxParams, BoxState};
use crate::geometry::{sample_catenary, CatenaryShape, Vec3, TAUT_EPSILON};

/// Arc-length intervals used when intersecting a slack cable with the box.
pub const CONTACT_SAMPLES: usize = 2048;
const INSIDE_TOL: f64 = 1e-9;
const NEGATIVE_TOL: f64 = 1e-12;
/// Points closer than this to two side faces count as a vertical edge.
const EDGE_BAND: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum CableError {
    #[error("demanded force needs pushing cables (tensions {tensions:?} N)")]
    Infeasible { tensions: [f64; 2] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Face {
    PlusX,
    MinusX,
    PlusY,
    MinusY,
    Top,
    Bottom,
}

/// Box feature the cable rests on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContactFeature {
    Face(Face),
    /// Vertical edge at the corner with the given x and y signs.
    VerticalEdge { x_positive: bool, y_positive: bool },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPoint {
    /// Position in the box frame.
    pub p: Vec3,
    pub feature: ContactFeature,
}

impl ContactPoint {
    /// Classifies a box-frame point by the nearest boundary.
    pub fn classify(p: Vec3, half: &Vec3) -> Self {
        let gaps = half - p.abs();
        let feature = if gaps.x < EDGE_BAND && gaps.y < EDGE_BAND {
            ContactFeature::VerticalEdge { x_positive: p.x >= 0.0, y_positive: p.y >= 0.0 }
        } else if gaps.x <= gaps.y && gaps.x <= gaps.z {
            ContactFeature::Face(if p.x >= 0.0 { Face::PlusX } else { Face::MinusX })
        } else if gaps.y <= gaps.z {
            ContactFeature::Face(if p.y >= 0.0 { Face::PlusY } else { Face::MinusY })
        } else {
            ContactFeature::Face(if p.z >= 0.0 { Face::Top } else { Face::Bottom })
        };
        Self { p, feature }
    }

    pub fn is_on_box(&self, half: &Vec3) -> bool {
        (self.p.abs() - half).max() <= INSIDE_TOL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CableFrictionRaw", into = "CableFrictionRaw")]
pub struct CableFriction {
    /// Cable-on-box friction coefficient (kept for a cone-based slip law).
    pub mu_c: f64,
    /// Elevation above which the cable slides off the contact (rad).
    pub gamma_max: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CableFrictionRaw {
    #[serde(default = "default_mu_c")]
    mu_c: f64,
    #[serde(default = "default_gamma_max")]
    gamma_max: f64,
}

fn default_mu_c() -> f64 {
    0.3
}

fn default_gamma_max() -> f64 {
    FRAC_PI_6
}

impl TryFrom<CableFrictionRaw> for CableFriction {
    type Error = String;
    fn try_from(raw: CableFrictionRaw) -> Result<Self, String> {
        Self::new(raw.mu_c, raw.gamma_max)
    }
}

impl From<CableFriction> for CableFrictionRaw {
    fn from(f: CableFriction) -> Self {
        Self { mu_c: f.mu_c, gamma_max: f.gamma_max }
    }
}

impl CableFriction {
    pub fn new(mu_c: f64, gamma_max: f64) -> Result<Self, String> {
        if !(mu_c >= 0.0 && mu_c.is_finite()) {
            return Err(format!("cable friction {mu_c} must be non-negative"));
        }
        if !(gamma_max > 0.0 && gamma_max < std::f64::consts::FRAC_PI_2) {
            return Err(format!("slip angle {gamma_max} must lie in (0, pi/2)"));
        }
        Ok(Self { mu_c, gamma_max })
    }
}

impl Default for CableFriction {
    fn default() -> Self {
        Self { mu_c: default_mu_c(), gamma_max: default_gamma_max() }
    }
}

/// Cable-to-box angles at a contact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactAngles {
    /// Top-view angle between the cable and the pulling direction.
    pub alpha: f64,
    /// Elevation of the free segment above the floor plane.
    pub gamma: f64,
    /// Angle between the tension and the moment arm (rolling only).
    pub beta: f64,
}

impl ContactAngles {
    /// Angles of the segment from `contact` to `quad` (world points), with
    /// `pull` the horizontal direction the box is pulled in.
    pub fn measure(contact: &Vec3, quad: &Vec3, pull: &Vec3, moment_arm: Option<&Vec3>) -> Self {
        let d = quad - contact;
        let horizontal = Vec3::new(d.x, d.y, 0.0);
        let gamma = d.z.atan2(horizontal.norm());
        let pull_h = Vec3::new(pull.x, pull.y, 0.0);
        let alpha = if horizontal.norm() > 0.0 && pull_h.norm() > 0.0 {
            horizontal.angle(&pull_h)
        } else {
            0.0
        };
        let beta = moment_arm.map_or(std::f64::consts::FRAC_PI_2, |arm| d.angle(arm));
        Self { alpha, gamma, beta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CableModel {
    Slack {
        shape: CatenaryShape,
    },
    Taut {
        contacts: [ContactPoint; 2],
        free_lengths: [f64; 2],
        wrap: f64,
        /// Force on the box at each contact, pointing toward its quadrotor.
        tensions: [Vec3; 2],
    },
}

impl CableModel {
    /// Loads the cable puts on the box; none while slack.
    pub fn box_loads(&self) -> Vec<AppliedForce> {
        match self {
            CableModel::Slack { .. } => Vec::new(),
            CableModel::Taut { contacts, tensions, .. } => contacts
                .iter()
                .zip(tensions)
                .map(|(c, t)| AppliedForce { point: c.p, force: *t })
                .collect(),
        }
    }

    /// Force the cable exerts on each quadrotor.
    pub fn quad_forces(&self) -> [Vec3; 2] {
        match self {
            CableModel::Slack { .. } => [Vec3::zeros(); 2],
            CableModel::Taut { tensions, .. } => [-tensions[0], -tensions[1]],
        }
    }

    pub fn tension_magnitudes(&self) -> [f64; 2] {
        match self {
            CableModel::Slack { .. } => [0.0; 2],
            CableModel::Taut { tensions, .. } => [tensions[0].norm(), tensions[1].norm()],
        }
    }
}

/// World position of a box-frame contact.
pub fn contact_point_world(p: &ContactPoint, state: &BoxState) -> Vec3 {
    state.to_world(&p.p)
}

/// First samples of a slack cable lying on or inside the box, searched from
/// each end. A cable entering and leaving through one region yields one
/// point per end; a single touching sample yields one point.
pub fn detect_contact(shape: &CatenaryShape, state: &BoxState, params: &BoxParams) -> Vec<ContactPoint> {
    detect_contact_sampled(shape, state, params, CONTACT_SAMPLES)
}

/// [`detect_contact`] with `intervals` arc-length intervals. Sample sets for
/// `n` and `2n` are nested, so refining never loses a contact.
pub fn detect_contact_sampled(
    shape: &CatenaryShape,
    state: &BoxState,
    params: &BoxParams,
    intervals: usize,
) -> Vec<ContactPoint> {
    let half = state.half_extents(params);
    let frame_t = state.frame_rotation().transpose();
    let local: Vec<Vec3> = sample_catenary(shape, intervals + 1)
        .into_iter()
        .map(|x| frame_t * (x - state.body.position))
        .collect();
    let inside = |p: &Vec3| (p.abs() - half).max() <= INSIDE_TOL;
    let Some(first) = local.iter().position(inside) else {
        return Vec::new();
    };
    let last = local.iter().rposition(inside).unwrap_or(first);
    let mut contacts = vec![ContactPoint::classify(local[first], &half)];
    if last != first {
        contacts.push(ContactPoint::classify(local[last], &half));
    }
    contacts
}

/// Lengths of the three straight pieces quad 1 -> contact 1 -> contact 2 -> quad 2.
pub fn taut_path(quads: &[Vec3; 2], contacts_world: &[Vec3; 2]) -> ([f64; 2], f64) {
    (
        [(quads[0] - contacts_world[0]).norm(), (quads[1] - contacts_world[1]).norm()],
        (contacts_world[0] - contacts_world[1]).norm(),
    )
}

/// Whether the straight path through the contacts uses up the cable.
pub fn detect_taut(quads: &[Vec3; 2], contacts_world: &[Vec3; 2], length: f64) -> bool {
    let (free, wrap) = taut_path(quads, contacts_world);
    free[0] + wrap + free[1] >= length - TAUT_EPSILON
}

fn cable_directions(state: &BoxState, contacts: &[ContactPoint; 2], quads: &[Vec3; 2]) -> [Vec3; 2] {
    std::array::from_fn(|i| (quads[i] - contact_point_world(&contacts[i], state)).normalize())
}

fn planar_matrix(dirs: &[Vec3; 2]) -> Matrix2<f64> {
    Matrix2::new(dirs[0].x, dirs[1].x, dirs[0].y, dirs[1].y)
}

/// Cable tensions whose sum has the planar components of `force`.
///
/// Each tension lies along its segment toward the quadrotor. The planar
/// balance is solved in least squares, which is exact unless the two cables
/// are parallel in top view.
pub fn tension_from_box_wrench(
    force: &Vec3,
    state: &BoxState,
    contacts: &[ContactPoint; 2],
    quads: &[Vec3; 2],
) -> Result<[Vec3; 2], CableError> {
    let dirs = cable_directions(state, contacts, quads);
    let target = Vector2::new(force.x, force.y);
    if target.norm() == 0.0 {
        return Ok([Vec3::zeros(); 2]);
    }
    let magnitudes = planar_matrix(&dirs)
        .svd(true, true)
        .solve(&target, 1e-12)
        .expect("svd with both factors");
    if magnitudes.min() < -NEGATIVE_TOL * (1.0 + target.norm()) {
        return Err(CableError::Infeasible { tensions: [magnitudes[0], magnitudes[1]] });
    }
    Ok([dirs[0] * magnitudes[0].max(0.0), dirs[1] * magnitudes[1].max(0.0)])
}

/// Non-negative least-squares tensions: the closest planar force the cables
/// can produce when the exact demand is infeasible.
pub fn tension_nonnegative(
    force: &Vec3,
    state: &BoxState,
    contacts: &[ContactPoint; 2],
    quads: &[Vec3; 2],
) -> [Vec3; 2] {
    if let Ok(t) = tension_from_box_wrench(force, state, contacts, quads) {
        return t;
    }
    let dirs = cable_directions(state, contacts, quads);
    let target = Vector2::new(force.x, force.y);
    let mut best = ([0.0, 0.0], target.norm_squared());
    for i in 0..2 {
        let u = dirs[i].xy();
        let uu = u.norm_squared();
        if uu <= 0.0 {
            continue;
        }
        let t = (u.dot(&target) / uu).max(0.0);
        let err = (u * t - target).norm_squared();
        if err < best.1 {
            let mut m = [0.0; 2];
            m[i] = t;
            best = (m, err);
        }
    }
    [dirs[0] * best.0[0], dirs[1] * best.0[1]]
}

/// Rotational residual of the box's Euler equation, box frame:
/// `sum p_i x t_i + J w x w - J dw`.
pub fn tension_residual(
    tensions: &[Vec3; 2],
    contacts: &[ContactPoint; 2],
    state: &BoxState,
    params: &BoxParams,
    omega_dot: &Vec3,
) -> Vec3 {
    let frame_t = state.frame_rotation().transpose();
    let p_mat = state.frame_in_body;
    let inertia = p_mat.transpose() * params.inertia * p_mat;
    let omega = p_mat.transpose() * state.body.omega;
    let applied: Vec3 = contacts.iter().zip(tensions).map(|(c, t)| c.p.cross(&(frame_t * *t))).sum();
    applied + (inertia * omega).cross(&omega) - inertia * omega_dot
}

/// Norm of [`tension_residual`].
pub fn tension_consistency(
    tensions: &[Vec3; 2],
    contacts: &[ContactPoint; 2],
    state: &BoxState,
    params: &BoxParams,
    omega_dot: &Vec3,
) -> f64 {
    tension_residual(tensions, contacts, state, params, omega_dot).norm()
}

/// Whether the cable slides off its contact.
pub fn slip_check(angles: &ContactAngles, friction: &CableFriction) -> bool {
    angles.gamma > friction.gamma_max
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{solve_catenary, Rotation};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn cube_at(x: f64, y: f64, yaw: f64) -> (BoxParams, BoxState) {
        let p = BoxParams::default();
        (p, BoxState::resting(&p, x, y, yaw))
    }

    #[test]
    fn contact_point_world_examples() {
        let (p, mut s) = cube_at(0.0, 0.0, 0.0);
        s.body.position = Vec3::zeros();
        let origin = ContactPoint::classify(Vec3::zeros(), &p.half_extents());
        assert_eq!(contact_point_world(&origin, &s), Vec3::zeros());
        s.body.rotation = Rotation::from_yaw(FRAC_PI_2);
        let c = ContactPoint { p: Vec3::x(), feature: ContactFeature::Face(Face::PlusX) };
        assert!((contact_point_world(&c, &s) - Vec3::y()).norm() < 1e-15);
        let (_, s) = cube_at(1.0, 2.0, 0.0);
        let c = ContactPoint { p: Vec3::new(-0.0775, -0.0775, 0.0425), feature: ContactFeature::Face(Face::MinusX) };
        assert!((contact_point_world(&c, &s) - Vec3::new(0.9225, 1.9225, 0.12)).norm() < 1e-15);
    }

    #[test]
    fn far_cable_has_no_contact() {
        let (p, s) = cube_at(0.0, 0.0, 0.0);
        let shape = solve_catenary([Vec3::new(1.0, -0.3, 1.0), Vec3::new(1.0, 0.3, 1.0)], 1.0).unwrap();
        assert!(detect_contact(&shape, &s, &p).is_empty());
    }

    #[test]
    fn steep_cable_touching_face_centre() {
        let (p, s) = cube_at(0.0, 0.0, 0.0);
        // cable hangs in the plane of the +x face, lowest point at its centre
        let length = 1.0;
        let span = 0.1;
        let sag = symmetric_sag_for(span, length);
        let top = 0.0775 + sag;
        let shape =
            solve_catenary([Vec3::new(0.0775, -span / 2.0, top), Vec3::new(0.0775, span / 2.0, top)], length).unwrap();
        assert!((shape.lowest_point - Vec3::new(0.0775, 0.0, 0.0775)).norm() < 1e-12);
        let contacts = detect_contact(&shape, &s, &p);
        assert_eq!(contacts.len(), 2);
        let centre = Vec3::new(0.0775, 0.0, 0.0);
        // the two entry points straddle the lowest point
        assert!(contacts[0].p.y < 0.0 && contacts[1].p.y > 0.0);
        for c in &contacts {
            assert!((c.p - centre).norm() < 0.1);
            assert_eq!(c.feature, ContactFeature::Face(Face::PlusX));
        }
    }

    fn symmetric_sag_for(span: f64, length: f64) -> f64 {
        crate::geometry::symmetric_sag(span, length).unwrap()
    }

    #[test]
    fn grazing_contact_matches_dense_oracle() {
        let (p, s) = cube_at(0.0, 0.0, 0.0);
        // cable across the top face, dipping 1 mm into the box
        let span = 0.8;
        let length = 1.0;
        let top = 0.155 - 0.001 + symmetric_sag_for(span, length);
        let shape = solve_catenary([Vec3::new(-0.4, 0.0, top), Vec3::new(0.4, 0.0, top)], length).unwrap();
        let coarse = detect_contact(&shape, &s, &p);
        let dense = detect_contact_sampled(&shape, &s, &p, 100_000);
        assert_eq!(coarse.len(), 2);
        assert_eq!(dense.len(), 2);
        let spacing = length / CONTACT_SAMPLES as f64;
        for (c, d) in coarse.iter().zip(&dense) {
            assert!((c.p - d.p).norm() <= spacing);
        }
    }

    #[test]
    fn taut_threshold() {
        let c = [Vec3::zeros(), Vec3::new(0.1, 0.0, 0.0)];
        let quads = |total: f64| {
            let free = (total - 0.1) / 2.0;
            [Vec3::new(-free, 0.0, 0.0), Vec3::new(0.1 + free, 0.0, 0.0)]
        };
        assert!(detect_taut(&quads(0.9990), &c, 1.0));
        assert!(!detect_taut(&quads(0.95), &c, 1.0));
        assert!(detect_taut(&quads(1.0 - TAUT_EPSILON), &c, 1.0));
    }

    fn drag_setup(alpha: f64, gamma: f64) -> (BoxParams, BoxState, [ContactPoint; 2], [Vec3; 2]) {
        let (p, s) = cube_at(0.0, 0.0, 0.0);
        let half = p.half_extents();
        let contacts = [
            ContactPoint::classify(Vec3::new(-half.x, -half.y, 0.0), &half),
            ContactPoint::classify(Vec3::new(-half.x, half.y, 0.0), &half),
        ];
        let quads = std::array::from_fn(|i| {
            let side = if i == 0 { -1.0 } else { 1.0 };
            let dir = Vec3::new(alpha.cos() * gamma.cos(), side * alpha.sin() * gamma.cos(), gamma.sin());
            contact_point_world(&contacts[i], &s) + 0.4 * dir
        });
        (p, s, contacts, quads)
    }

    #[test]
    fn symmetric_split() {
        let (alpha, gamma) = (FRAC_PI_4, std::f64::consts::PI / 12.0);
        let (_, s, c, q) = drag_setup(alpha, gamma);
        let force = Vec3::new(0.3, 0.0, 0.0);
        let t = tension_from_box_wrench(&force, &s, &c, &q).unwrap();
        let expected = 0.3 / (2.0 * alpha.cos() * gamma.cos());
        assert_relative_eq!(t[0].norm(), expected, epsilon = 1e-12);
        assert_relative_eq!(t[1].norm(), expected, epsilon = 1e-12);
    }

    #[test]
    fn zero_demand_and_pushing() {
        let (_, s, c, q) = drag_setup(FRAC_PI_4, 0.2);
        assert_eq!(tension_from_box_wrench(&Vec3::zeros(), &s, &c, &q).unwrap(), [Vec3::zeros(); 2]);
        let err = tension_from_box_wrench(&Vec3::new(-0.3, 0.0, 0.0), &s, &c, &q).unwrap_err();
        assert!(matches!(err, CableError::Infeasible { .. }));
        let t = tension_nonnegative(&Vec3::new(-0.3, 0.0, 0.0), &s, &c, &q);
        assert_eq!(t, [Vec3::zeros(); 2]);
        let t = tension_nonnegative(&Vec3::new(0.0, 0.5, 0.0), &s, &c, &q);
        assert_eq!(t[0], Vec3::zeros());
        assert!(t[1].norm() > 0.0);
    }

    #[test]
    fn consistency_residual() {
        let (p, s, c, q) = drag_setup(FRAC_PI_4, 0.2);
        let zero = [Vec3::zeros(); 2];
        assert_eq!(tension_consistency(&zero, &c, &s, &p, &Vec3::zeros()), 0.0);
        let t = [Vec3::new(0.1, 0.3, 0.0), Vec3::new(0.2, -0.05, 0.1)];
        assert!(tension_consistency(&t, &c, &s, &p, &Vec3::zeros()) > 0.0);
        let symmetric = tension_from_box_wrench(&Vec3::new(0.3, 0.0, 0.0), &s, &c, &q).unwrap();
        let r = tension_residual(&symmetric, &c, &s, &p, &Vec3::zeros());
        assert!(r.z.abs() < 1e-12);
    }

    #[test]
    fn slip_threshold() {
        let f = CableFriction::default();
        let angles = |gamma| ContactAngles { alpha: 0.0, gamma, beta: FRAC_PI_2 };
        assert!(!slip_check(&angles(std::f64::consts::PI / 12.0), &f));
        assert!(slip_check(&angles(FRAC_PI_4), &f));
        assert!(!slip_check(&angles(FRAC_PI_6), &f));
    }

    #[test]
    fn measured_angles() {
        let a = ContactAngles::measure(&Vec3::zeros(), &Vec3::new(1.0, 1.0, 2f64.sqrt()), &Vec3::x(), None);
        assert_relative_eq!(a.gamma, FRAC_PI_4, epsilon = 1e-15);
        assert_relative_eq!(a.alpha, FRAC_PI_4, epsilon = 1e-15);
    }

    #[test]
    fn slack_cable_exerts_nothing() {
        let shape = solve_catenary([Vec3::zeros(), Vec3::new(0.5, 0.0, 0.0)], 1.0).unwrap();
        let m = CableModel::Slack { shape };
        assert!(m.box_loads().is_empty());
        assert_eq!(m.quad_forces(), [Vec3::zeros(); 2]);
    }

    proptest! {
        #[test]
        fn tensions_back_substitute(
            alpha in 0.1..1.4f64, gamma in 0.0..1.0f64, fx in 0.0..1.0f64, fy in -0.3..0.3f64,
        ) {
            let (_, s, c, q) = drag_setup(alpha, gamma);
            let force = Vec3::new(fx, fy * fx * alpha.tan(), 0.0);
            let t = tension_from_box_wrench(&force, &s, &c, &q).unwrap();
            let sum = t[0] + t[1];
            prop_assert!((sum.xy() - force.xy()).norm() < 1e-9);
            for i in 0..2 {
                let dir = q[i] - contact_point_world(&c[i], &s);
                prop_assert!(t[i].cross(&dir).norm() <= 1e-12 * (1.0 + t[i].norm()));
                prop_assert!(t[i].dot(&dir) >= 0.0);
            }
        }

        #[test]
        fn contacts_survive_refinement(dx in -0.2..0.2f64, drop in 0.0..0.3f64, n in 16usize..512) {
            let (p, s) = cube_at(0.0, 0.0, 0.0);
            let span = 0.7;
            let top = 0.3 + symmetric_sag_for(span, 1.0) - drop;
            let shape = solve_catenary([Vec3::new(dx - 0.35, 0.02, top), Vec3::new(dx + 0.35, -0.01, top)], 1.0).unwrap();
            let coarse = detect_contact_sampled(&shape, &s, &p, n);
            let fine = detect_contact_sampled(&shape, &s, &p, 2 * n);
            if !coarse.is_empty() {
                prop_assert!(!fine.is_empty());
            }
        }
    }
}
