//! Simulation and control of a catenary robot: two quadrotors joined by an
//! inextensible cable that drag and roll cuboid boxes across a floor.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`] rotation primitives and catenary curves
//! * [`dynamics`] rigid-body models for the quadrotors and the box, plus RK4
//! * [`cable`] slack/taut cable model, contact detection and tension solve
//! * [`modes`] the free / initial-contact / action automaton
//! * [`control`] box wrench PID, yaw law, quadrotor references, SE(3) tracking
//! * [`planner`] drag-versus-roll choice, contact placement, approach paths
//! * [`scenario`] configuration, closed-loop driver, CSV log and analysis

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cable;
pub mod control;
pub mod dynamics;
pub mod geometry;
pub mod modes;
pub mod planner;
pub mod scenario;

pub use geometry::{Rotation, Vec3, WorldConstants};
