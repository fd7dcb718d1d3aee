//! Drag-or-roll decision, contact placement, and approach paths.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cable::{ContactFeature, ContactPoint};
use crate::dynamics::{BoxParams, BoxState, GroundModel};
use crate::geometry::{rot_axis_angle, symmetric_sag, wrap_angle, Axis, Rotation, Vec3};
use crate::modes::ActionKind;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum PlannerError {
    #[error("contact height {height} m is out of reach for a box {box_height} m tall")]
    Unreachable { height: f64, box_height: f64 },
    #[error("roll contact at {height} m would sit below the centre of mass")]
    RollBelowCentre { height: f64 },
}

/// Tunable placement geometry (heights above the floor).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerSettings {
    pub alpha: f64,
    pub gamma: f64,
    /// Drag contact clearance above the floor (m).
    pub drag_clearance: f64,
    /// Roll contact height above the floor (m).
    pub roll_height: f64,
    /// Quarter rolls per roll action.
    pub quarter_rolls: u32,
    /// Duration of one commanded quarter roll (s).
    pub roll_duration: f64,
    /// Extra height kept above the floor limit by the quadrotors (m).
    pub floor_margin: f64,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        Self {
            alpha: FRAC_PI_4,
            gamma: PI / 12.0,
            drag_clearance: 0.01,
            roll_height: 0.12,
            quarter_rolls: 1,
            roll_duration: 1.5,
            floor_margin: 0.02,
        }
    }
}

impl PlannerSettings {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..FRAC_PI_2).contains(&self.alpha) {
            return Err(format!("alpha {} must lie in [0, pi/2)", self.alpha));
        }
        if !(0.0..FRAC_PI_2).contains(&self.gamma) {
            return Err(format!("gamma {} must lie in [0, pi/2)", self.gamma));
        }
        if !(self.drag_clearance > 0.0) || !(self.roll_height > 0.0) {
            return Err("contact heights must be positive".into());
        }
        if self.quarter_rolls == 0 {
            return Err("quarter_rolls must be at least 1".into());
        }
        if !(self.roll_duration > 0.0) || !(self.floor_margin >= 0.0) {
            return Err("roll_duration must be positive and floor_margin non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionDecision {
    pub action: ActionKind,
    pub mu_star: f64,
}

/// Tip-or-slide choice for a horizontal pull at `z_contact` above the floor.
/// A box slides first when `mu_s <= (w/2) / z_contact`.
pub fn choose_action(params: &BoxParams, ground: &GroundModel, z_contact: f64) -> ActionDecision {
    let mu_star = 0.5 * params.width / z_contact;
    let action = if ground.mu_static <= mu_star { ActionKind::Drag } else { ActionKind::Roll };
    ActionDecision { action, mu_star }
}

/// Where and how the cable grips the box.
///
/// Contacts are expressed in the placement frame: the upright box frame
/// turned by `face_yaw` about the vertical so that +x is the motion
/// direction. Contact 1 is on the -y side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPlacement {
    pub contacts: [ContactPoint; 2],
    pub alpha: f64,
    pub gamma: f64,
    /// Contact height above the floor (m).
    pub z_contact: f64,
    pub action: ActionKind,
    /// Free cable on each side between contact and quadrotor (m).
    pub free_length: f64,
    /// Yaw of the placement frame relative to the box frame (multiple of pi/2).
    pub face_yaw: f64,
}

impl ContactPlacement {
    /// Unit cable direction from contact `i` toward its quadrotor.
    pub fn cable_direction(&self, i: usize) -> Vec3 {
        let side = if i == 0 { -1.0 } else { 1.0 };
        rot_axis_angle(Axis::Z, side * self.alpha) * (rot_axis_angle(Axis::Y, -self.gamma) * Vec3::x())
    }

    /// Quadrotor positions in the placement frame.
    pub fn quad_offsets(&self) -> [Vec3; 2] {
        std::array::from_fn(|i| self.contacts[i].p + self.free_length * self.cable_direction(i))
    }

    /// On-box cable length between the contacts.
    pub fn wrap(&self) -> f64 {
        (self.contacts[0].p - self.contacts[1].p).norm()
    }

    /// Contacts in the box frame.
    pub fn contacts_in_box(&self) -> [ContactPoint; 2] {
        let turn = Rotation::from_yaw(self.face_yaw);
        self.contacts.map(|c| ContactPoint { p: turn * c.p, feature: c.feature })
    }

    /// Horizontal distance between the quadrotors when taut.
    pub fn quad_span(&self) -> f64 {
        let q = self.quad_offsets();
        (q[0] - q[1]).xy().norm()
    }
}

/// Multiple of pi/2 that turns the box frame closest to `heading`.
pub fn face_yaw_for(box_yaw: f64, heading: f64) -> f64 {
    let quarter = (wrap_angle(heading - box_yaw) / FRAC_PI_2).round();
    wrap_angle(quarter * FRAC_PI_2)
}

/// Half extents seen from the placement frame.
fn placement_half_extents(half: &Vec3, face_yaw: f64) -> Vec3 {
    let turn = Rotation::from_yaw(face_yaw);
    turn.transpose().matrix().abs() * half
}

/// Contact placement for `action` on a box with upright half extents `half`.
///
/// The elevation is raised above the setting if needed so that taut
/// quadrotors stay at least `min_altitude` above the floor.
pub fn plan_placement(
    action: ActionKind,
    half: &Vec3,
    cable_length: f64,
    face_yaw: f64,
    settings: &PlannerSettings,
    min_altitude: f64,
) -> Result<ContactPlacement, PlannerError> {
    let h = placement_half_extents(half, face_yaw);
    let z_contact = match action {
        ActionKind::Drag => settings.drag_clearance,
        ActionKind::Roll => settings.roll_height,
    };
    if !(z_contact > 0.0 && z_contact <= 2.0 * h.z) {
        return Err(PlannerError::Unreachable { height: z_contact, box_height: 2.0 * h.z });
    }
    let z_body = z_contact - h.z;
    if action == ActionKind::Roll && z_body <= 0.0 {
        return Err(PlannerError::RollBelowCentre { height: z_contact });
    }
    let contacts = [-1.0, 1.0].map(|side: f64| ContactPoint {
        p: Vec3::new(-h.x, side * h.y, z_body),
        feature: ContactFeature::VerticalEdge { x_positive: false, y_positive: side > 0.0 },
    });
    let wrap = 2.0 * h.y;
    let free_length = 0.5 * (cable_length - wrap);
    if free_length <= 0.0 {
        return Err(PlannerError::Unreachable { height: z_contact, box_height: 2.0 * h.z });
    }
    let lift = ((min_altitude - z_contact) / free_length).clamp(-1.0, 1.0).asin();
    Ok(ContactPlacement {
        contacts,
        alpha: settings.alpha,
        gamma: settings.gamma.max(lift),
        z_contact,
        action,
        free_length,
        face_yaw,
    })
}

/// Drag placement at the default settings, low on the rear edges.
pub fn drag_placement(params: &BoxParams, cable_length: f64) -> ContactPlacement {
    plan_placement(
        ActionKind::Drag,
        &params.half_extents(),
        cable_length,
        0.0,
        &PlannerSettings::default(),
        f64::NEG_INFINITY,
    )
    .expect("default drag placement")
}

/// Roll placement at the default settings, high on the rear edges.
pub fn roll_placement(params: &BoxParams, cable_length: f64) -> Result<ContactPlacement, PlannerError> {
    plan_placement(
        ActionKind::Roll,
        &params.half_extents(),
        cable_length,
        0.0,
        &PlannerSettings::default(),
        f64::NEG_INFINITY,
    )
}

/// Cable elevation that puts the tension at angle `beta` to the moment arm
/// from the pivot edge to a contact at `z_contact` on a face `length` deep.
pub fn gamma_for_beta(beta: f64, z_contact: f64, length: f64) -> f64 {
    beta - (z_contact / length).atan()
}

/// Target for the cable's lowest point and the quadrotor span.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub lowest: Vec3,
    pub span: f64,
    /// Travel speed into this waypoint (m/s).
    pub speed: f64,
}

/// Approach path for the free cable: stand off behind the box, narrow the
/// span, then advance the lowest point onto the rear face.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproachPlan {
    pub waypoints: Vec<Waypoint>,
    /// Horizontal motion direction (unit).
    pub direction: Vec3,
    /// Horizontal unit from quadrotor 1 to quadrotor 2.
    pub lateral: Vec3,
    pub cable_length: f64,
    /// Speed of the final creep along `direction` (m/s).
    pub creep_speed: f64,
}

impl ApproachPlan {
    /// Quadrotor positions holding the cable's lowest point at `lowest`.
    pub fn quads_for(&self, lowest: &Vec3, span: f64) -> [Vec3; 2] {
        let sag = symmetric_sag(span, self.cable_length).unwrap_or(0.5 * self.cable_length);
        let up = Vec3::new(0.0, 0.0, sag);
        [lowest - 0.5 * span * self.lateral + up, lowest + 0.5 * span * self.lateral + up]
    }
}

pub const STANDOFF: f64 = 0.3;
pub const APPROACH_SPEED: f64 = 0.3;
pub const ADVANCE_SPEED: f64 = 0.1;
pub const CREEP_SPEED: f64 = 0.05;

pub fn approach_waypoints(
    placement: &ContactPlacement,
    state: &BoxState,
    params: &BoxParams,
    cable_length: f64,
    floor_limit: f64,
) -> Result<ApproachPlan, PlannerError> {
    let half = state.half_extents(params);
    let box_height = 2.0 * half.z;
    let z = placement.z_contact;
    if !(z > 0.0 && z <= box_height) {
        return Err(PlannerError::Unreachable { height: z, box_height });
    }
    let frame = Rotation::from_yaw(state.yaw() + placement.face_yaw);
    let direction = frame * Vec3::x();
    let lateral = frame * Vec3::y();
    let depth = placement_half_extents(&half, placement.face_yaw).x;
    let mut rear = state.body.position - depth * direction;
    rear.z = z;

    let wide = 0.8 * cable_length;
    let narrow = placement.quad_span().min(wide);
    let waypoints = vec![
        Waypoint { lowest: rear - STANDOFF * direction, span: wide, speed: APPROACH_SPEED },
        Waypoint { lowest: rear - STANDOFF * direction, span: narrow, speed: APPROACH_SPEED },
        Waypoint { lowest: rear, span: narrow, speed: ADVANCE_SPEED },
    ];
    let plan = ApproachPlan { waypoints, direction, lateral, cable_length, creep_speed: CREEP_SPEED };
    for w in &plan.waypoints {
        for q in plan.quads_for(&w.lowest, w.span) {
            if q.z < floor_limit {
                return Err(PlannerError::Unreachable { height: z, box_height });
            }
        }
    }
    Ok(plan)
}
