//! Rigid-body models and the fixed-step integrator.

mod cuboid;
mod integrator;
mod quadrotor;
mod rigid;

pub use cuboid::{
    begin_pivot, box_derivative, edge_inertia, footprint_radius, friction_force, ground_friction, impact_resolution, pivot_gravity_torque,
    rolling_pivot_derivative, step_box, tip_onset, AppliedForce, BoxParams, BoxState, BoxStep, EdgeId,
    GroundModel, Pivot, Support, SupportEvent, REST_SPEED,
};
pub use integrator::{rk4_step, try_rk4_step, OdeState};
pub use quadrotor::{
    quad_derivative, step_quadrotor, ControlInput, QuadCommand, QuadrotorParams, QuadrotorState,
};
pub use rigid::{RigidRate, RigidState};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DynamicsError {
    #[error("box lifted off the floor (normal force {normal:.4} N)")]
    NegativeNormal { normal: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("operation does not match the current box support")]
    WrongSupport,
}
