//! Newton-Euler model of one quadrotor carrying a cable end.

use serde::{Deserialize, Serialize};

use crate::geometry::{Mat3, Vec3, WorldConstants};

use super::integrator::rk4_step;
use super::rigid::{RigidRate, RigidState};
use super::DynamicsError;

pub type QuadrotorState = RigidState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QuadrotorParamsRaw", into = "QuadrotorParamsRaw")]
pub struct QuadrotorParams {
    mass: f64,
    inertia: Mat3,
    inertia_inv: Mat3,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadrotorParamsRaw {
    mass: f64,
    inertia: [[f64; 3]; 3],
}

impl TryFrom<QuadrotorParamsRaw> for QuadrotorParams {
    type Error = DynamicsError;
    fn try_from(raw: QuadrotorParamsRaw) -> Result<Self, Self::Error> {
        let i = raw.inertia;
        Self::new(raw.mass, Mat3::from_fn(|r, c| i[r][c]))
    }
}

impl From<QuadrotorParams> for QuadrotorParamsRaw {
    fn from(p: QuadrotorParams) -> Self {
        let j = p.inertia;
        Self {
            mass: p.mass,
            inertia: std::array::from_fn(|r| std::array::from_fn(|c| j[(r, c)])),
        }
    }
}

impl QuadrotorParams {
    pub fn new(mass: f64, inertia: Mat3) -> Result<Self, DynamicsError> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(DynamicsError::InvalidParameter(format!("quadrotor mass {mass} must be positive")));
        }
        if (inertia - inertia.transpose()).norm() > 1e-12 || inertia.cholesky().is_none() {
            return Err(DynamicsError::InvalidParameter(
                "quadrotor inertia must be symmetric positive definite".into(),
            ));
        }
        let inertia_inv = inertia.try_inverse().expect("SPD matrices are invertible");
        Ok(Self { mass, inertia, inertia_inv })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn inertia(&self) -> &Mat3 {
        &self.inertia
    }
}

impl Default for QuadrotorParams {
    /// A 250 g airframe with a scaled-up Crazyflie inertia.
    fn default() -> Self {
        Self::new(0.25, Mat3::from_diagonal(&Vec3::new(1.5e-3, 1.5e-3, 2.5e-3))).unwrap()
    }
}

/// Collective thrust and body torque for both vehicles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput {
    pub thrust: [f64; 2],
    pub torque: [Vec3; 2],
}

/// Thrust and torque for a single vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadCommand {
    pub thrust: f64,
    pub torque: Vec3,
}

impl QuadCommand {
    pub fn hover(params: &QuadrotorParams, world: &WorldConstants) -> Self {
        Self { thrust: params.mass * world.g, torque: Vec3::zeros() }
    }
}

/// `m r'' = -m g e3 + f R e3 + R t`, `J w' = J w x w + tau`, `R' = R hat(w)`.
///
/// `cable_force_body` is the cable pull on the vehicle in its body frame.
pub fn quad_derivative(
    state: &QuadrotorState,
    params: &QuadrotorParams,
    world: &WorldConstants,
    command: &QuadCommand,
    cable_force_body: &Vec3,
) -> RigidRate {
    let r = state.rotation.matrix();
    let force = -params.mass * world.g * WorldConstants::E3
        + command.thrust * r * WorldConstants::E3
        + r * cable_force_body;
    let j_omega = params.inertia * state.omega;
    let angular = params.inertia_inv * (j_omega.cross(&state.omega) + command.torque);
    RigidRate::kinematic(state, force / params.mass, angular)
}

/// Advances one vehicle by `dt` with thrust, torque and the world-frame
/// cable force held constant over the step.
pub fn step_quadrotor(
    state: &QuadrotorState,
    params: &QuadrotorParams,
    world: &WorldConstants,
    command: &QuadCommand,
    cable_force_world: &Vec3,
    dt: f64,
) -> QuadrotorState {
    rk4_step(state, dt, |s| {
        let body = s.rotation.matrix().transpose() * cable_force_world;
        quad_derivative(s, params, world, command, &body)
    })
}
