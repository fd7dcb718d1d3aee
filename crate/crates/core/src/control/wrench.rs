use crate::cable::{tension_from_box_wrench, tension_nonnegative, ContactPoint};
use crate::dynamics::{begin_pivot, edge_inertia, pivot_gravity_torque, BoxParams, BoxState, EdgeId, Support};
use crate::geometry::{wrap_angle, Vec3, WorldConstants};

use super::{BoxReference, ControlError, Gains};

/// Below this planar demand (N) the pull direction is held.
const MIN_PULL_FOR_HEADING: f64 = 0.05;
const MIN_ROLL_LEVER: f64 = 1e-9;
/// Reference speed (m/s) above which the full friction feedforward applies.
pub const FRICTION_FF_SPEED: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IntegralState {
    /// Accumulated `K_i e_p dt` (N).
    pub term: Vec3,
    last_error: Option<Vec3>,
}

impl IntegralState {
    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// Box force PID with acceleration feedforward. The integral is
/// accumulated with the trapezoid rule and clamped componentwise.
pub fn box_wrench_pid(
    reference: &BoxReference,
    state: &BoxState,
    params: &BoxParams,
    gains: &Gains,
    dt: f64,
    integral: &IntegralState,
) -> (Vec3, IntegralState) {
    let kp = Vec3::from(gains.kp);
    let kv = Vec3::from(gains.kv);
    let ki = Vec3::from(gains.ki);
    let e_p = reference.position - state.body.position;
    let e_v = reference.velocity - state.body.velocity;
    let previous = integral.last_error.unwrap_or(e_p);
    let limit = gains.integral_clamp;
    let term = (integral.term + ki.component_mul(&(0.5 * (previous + e_p) * dt))).map(|v| v.clamp(-limit, limit));
    let force = kp.component_mul(&e_p) + kv.component_mul(&e_v) + term + params.mass * reference.acceleration;
    (force, IntegralState { term, last_error: Some(e_p) })
}

/// Kinetic friction the box will meet moving along the reference velocity,
/// ramped in linearly below [`FRICTION_FF_SPEED`] so a reference leaving
/// rest does not step the demand past the static limit.
pub fn friction_feedforward(reference: &BoxReference, params: &BoxParams, mu_kinetic: f64, world: &WorldConstants) -> Vec3 {
    let v = Vec3::new(reference.velocity.x, reference.velocity.y, 0.0);
    mu_kinetic * params.mass * world.g * v / v.norm().max(FRICTION_FF_SPEED)
}

/// Commanded heading and the bounded correction `psi_cmd - psi_d`.
pub fn yaw_command(reference: &BoxReference, state: &BoxState, gains: &Gains) -> (f64, f64) {
    let yaw_rate = state.omega_world().z;
    let correction = gains.yaw_kp * wrap_angle(reference.yaw - state.yaw()) + gains.yaw_kv * (reference.yaw_rate - yaw_rate);
    let limit = gains.yaw_correction_limit;
    (wrap_angle(reference.yaw + correction), correction.clamp(-limit, limit))
}

/// Yaw setpoints of the two quadrotors.
pub fn yaw_setpoints(reference: &BoxReference, state: &BoxState, gains: &Gains) -> [f64; 2] {
    let (psi, _) = yaw_command(reference, state, gains);
    [psi, psi]
}

/// Heading of the quadrotor formation: the planar force direction turned
/// by the yaw correction. Turning the formation off the force line makes
/// the two tensions unequal, which yaws the box.
pub fn pull_heading(force: &Vec3, correction: f64, previous: f64) -> f64 {
    if force.xy().norm() < MIN_PULL_FOR_HEADING {
        return previous;
    }
    wrap_angle(force.y.atan2(force.x) + correction)
}

/// Desired rotation about the pivot edge within the current quarter roll.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RollReference {
    pub angle: f64,
    pub rate: f64,
    pub accel: f64,
}

/// Planar pull that drives the pivot angle along `reference`: computed
/// torque about the edge with gravity compensation, mapped through the
/// cable geometry to a force along the roll direction.
#[allow(clippy::too_many_arguments)]
pub fn roll_force_command(
    state: &BoxState,
    params: &BoxParams,
    world: &WorldConstants,
    gains: &Gains,
    reference: &RollReference,
    edge: EdgeId,
    contacts: &[ContactPoint; 2],
    quads: &[Vec3; 2],
) -> Result<Vec3, ControlError> {
    let pivoting = match state.support {
        Support::PivotingOnEdge(_) => *state,
        Support::FlatOnGround => begin_pivot(state, params, edge),
    };
    let Support::PivotingOnEdge(pivot) = pivoting.support else { unreachable!() };
    let inertia = edge_inertia(&pivoting, params).expect("pivoting");
    let gravity = pivot_gravity_torque(&pivoting, params, world).expect("pivoting");
    let accel = reference.accel
        + gains.roll_kp * (reference.angle - pivot.angle)
        + gains.roll_kv * (reference.rate - pivot.rate);
    let torque = inertia * accel - gravity;

    let direction = pivot.axis.cross(&WorldConstants::E3);
    let unit = tension_from_box_wrench(&direction, state, contacts, quads)
        .unwrap_or_else(|_| tension_nonnegative(&direction, state, contacts, quads));
    let lever: f64 = contacts
        .iter()
        .zip(&unit)
        .map(|(c, t)| (state.to_world(&c.p) - pivot.edge_point).cross(t).dot(&pivot.axis))
        .sum();
    if lever <= MIN_ROLL_LEVER {
        return Err(ControlError::NoRollAuthority);
    }
    Ok(direction * (torque.max(0.0) / lever))
}
