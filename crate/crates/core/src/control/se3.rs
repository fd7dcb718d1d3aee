use crate::dynamics::{QuadCommand, QuadrotorParams, QuadrotorState};
use crate::geometry::{vee, Mat3, Rotation, Vec3, WorldConstants};

use super::{ControlError, Gains, QuadReference};

const MIN_FORCE: f64 = 1e-9;

/// Attitude whose thrust axis is along `force` with heading near `yaw`.
pub fn desired_attitude(force: &Vec3, yaw: f64) -> Result<Rotation, ControlError> {
    let magnitude = force.norm();
    if magnitude < MIN_FORCE {
        return Err(ControlError::AttitudeSingular { magnitude });
    }
    let b3 = force / magnitude;
    let heading = Vec3::new(yaw.cos(), yaw.sin(), 0.0);
    let b2_raw = b3.cross(&heading);
    if b2_raw.norm() < MIN_FORCE {
        return Err(ControlError::AttitudeSingular { magnitude });
    }
    let b2 = b2_raw.normalize();
    let b1 = b2.cross(&b3);
    Ok(Rotation::from_matrix_projected(Mat3::from_columns(&[b1, b2, b3])))
}

/// `e_R = vee(R_d^T R - R^T R_d) / 2`.
pub fn attitude_error(actual: &Rotation, desired: &Rotation) -> Vec3 {
    let rd = desired.matrix();
    let r = actual.matrix();
    0.5 * vee(&(rd.transpose() * r - r.transpose() * rd))
}

/// Geometric tracking law for one quadrotor. `tension` is the force the
/// cable puts on the box at this quadrotor's contact; the quadrotor feels
/// its opposite, so it is added to the required force.
pub fn se3_controller(
    state: &QuadrotorState,
    reference: &QuadReference,
    params: &QuadrotorParams,
    gains: &Gains,
    world: &WorldConstants,
    tension: &Vec3,
) -> Result<QuadCommand, ControlError> {
    let m = params.mass();
    let e_x = state.position - reference.position;
    let e_v = state.velocity - reference.velocity;
    let force = -gains.quad_kx * e_x - gains.quad_kv * e_v
        + m * world.g * WorldConstants::E3
        + m * reference.acceleration
        + tension;
    let desired = desired_attitude(&force, reference.yaw)?;
    let thrust = force.dot(&state.rotation.column(2)).max(0.0);
    let e_r = attitude_error(&state.rotation, &desired);
    // desired angular velocity is taken as zero
    let e_w = state.omega;
    let omega = state.omega;
    let torque = -gains.quad_kr * e_r - gains.quad_komega * e_w + omega.cross(&(params.inertia() * omega));
    Ok(QuadCommand { thrust, torque })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{step_quadrotor, RigidState};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn hover_setup() -> (QuadrotorParams, WorldConstants, Gains, QuadReference) {
        let r = QuadReference::hold(Vec3::new(0.0, 0.0, 1.0), 0.0);
        (QuadrotorParams::default(), WorldConstants::default(), Gains::default(), r)
    }

    #[test]
    fn equilibrium_hover() {
        let (p, w, g, r) = hover_setup();
        let s = RigidState::at_rest(r.position, Rotation::identity());
        let c = se3_controller(&s, &r, &p, &g, &w, &Vec3::zeros()).unwrap();
        assert_relative_eq!(c.thrust, p.mass() * w.g, epsilon = 1e-12);
        assert!(c.torque.norm() < 1e-15);
    }

    #[test]
    fn below_setpoint_climbs() {
        let (p, w, g, r) = hover_setup();
        let s = RigidState::at_rest(r.position - Vec3::new(0.0, 0.0, 0.01), Rotation::identity());
        let c = se3_controller(&s, &r, &p, &g, &w, &Vec3::zeros()).unwrap();
        assert!(c.thrust > p.mass() * w.g);
    }

    #[test]
    fn free_fall_demand_is_singular() {
        let (p, w, g, mut r) = hover_setup();
        r.acceleration = Vec3::new(0.0, 0.0, -w.g);
        let s = RigidState::at_rest(r.position, Rotation::identity());
        let err = se3_controller(&s, &r, &p, &g, &w, &Vec3::zeros()).unwrap_err();
        assert!(matches!(err, ControlError::AttitudeSingular { .. }));
    }

    #[test]
    fn settles_from_offset() {
        let (p, w, g, r) = hover_setup();
        let mut s = RigidState::at_rest(r.position + Vec3::new(0.05, 0.0, 0.0), Rotation::identity());
        let dt = 1e-3;
        for _ in 0..5000 {
            let c = se3_controller(&s, &r, &p, &g, &w, &Vec3::zeros()).unwrap();
            s = step_quadrotor(&s, &p, &w, &c, &Vec3::zeros(), dt);
        }
        assert!((s.position - r.position).norm() < 1e-3);
    }

    #[test]
    fn cable_load_is_compensated() {
        let (p, w, g, r) = hover_setup();
        let t = Vec3::new(0.1, 0.0, -0.2);
        let mut s = RigidState::at_rest(r.position, Rotation::identity());
        let dt = 1e-3;
        for _ in 0..8000 {
            let c = se3_controller(&s, &r, &p, &g, &w, &t).unwrap();
            s = step_quadrotor(&s, &p, &w, &c, &(-t), dt);
        }
        assert!((s.position - r.position).norm() < 1e-3);
    }

    proptest! {
        #[test]
        fn attitude_error_vanishes_on_itself(ax in -1.0..1.0f64, ay in -1.0..1.0f64, az in -1.0..1.0f64, angle in -3.1..3.1f64) {
            let axis = Vec3::new(ax, ay, az);
            prop_assume!(axis.norm() > 1e-3);
            let r = Rotation::from_axis_angle(&axis.normalize(), angle);
            prop_assert!(attitude_error(&r, &r).norm() < 1e-15);
        }
    }
}
