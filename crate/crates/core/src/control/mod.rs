//! Box wrench and yaw laws, quadrotor references, and SE(3) tracking.

mod reference;
mod se3;
mod wrench;

pub use reference::{quad_reference_from_box, quads_from_contacts, FloorMonitor, FrameMotion, QuadReference};
pub use se3::{attitude_error, desired_attitude, se3_controller};
pub use wrench::{
    box_wrench_pid, friction_feedforward, pull_heading, roll_force_command, yaw_command, yaw_setpoints,
    IntegralState, RollReference, FRICTION_FF_SPEED,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ControlError {
    #[error("required thrust vector vanished ({magnitude:e} N)")]
    AttitudeSingular { magnitude: f64 },
    #[error("quadrotor reference held at the floor limit for {duration} s")]
    FloorViolation { duration: f64 },
    #[error("pulling direction cannot produce torque about the pivot edge")]
    NoRollAuthority,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Gains {
    /// Box position gains (diagonal).
    pub kp: [f64; 3],
    /// Box velocity gains (diagonal).
    pub kv: [f64; 3],
    /// Box integral gains (diagonal).
    pub ki: [f64; 3],
    /// Componentwise bound on the integral term (N).
    pub integral_clamp: f64,
    pub yaw_kp: f64,
    pub yaw_kv: f64,
    /// Bound on the yaw correction steering the pull direction (rad).
    pub yaw_correction_limit: f64,
    pub roll_kp: f64,
    pub roll_kv: f64,
    pub quad_kx: f64,
    pub quad_kv: f64,
    pub quad_kr: f64,
    pub quad_komega: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Self {
            kp: [4.0; 3],
            kv: [3.0; 3],
            ki: [0.5; 3],
            integral_clamp: 0.5,
            yaw_kp: 0.2,
            yaw_kv: 0.07,
            yaw_correction_limit: 0.5,
            roll_kp: 25.0,
            roll_kv: 10.0,
            quad_kx: 25.0,
            quad_kv: 5.0,
            quad_kr: 2.0,
            quad_komega: 0.15,
        }
    }
}

impl Gains {
    pub fn validate(&self) -> Result<(), String> {
        let scalars = [
            ("yaw_kp", self.yaw_kp),
            ("yaw_kv", self.yaw_kv),
            ("yaw_correction_limit", self.yaw_correction_limit),
            ("roll_kp", self.roll_kp),
            ("roll_kv", self.roll_kv),
            ("quad_kx", self.quad_kx),
            ("quad_kv", self.quad_kv),
            ("quad_kr", self.quad_kr),
            ("quad_komega", self.quad_komega),
        ];
        let diagonals = [("kp", self.kp), ("kv", self.kv), ("ki", self.ki)];
        for (name, v) in scalars.into_iter().chain(diagonals.iter().flat_map(|(n, d)| d.map(|v| (*n, v)))) {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("gain {name} = {v} must be non-negative"));
            }
        }
        if !(self.integral_clamp > 0.0) {
            return Err(format!("integral_clamp = {} must be positive", self.integral_clamp));
        }
        Ok(())
    }
}

/// Desired box motion at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoxReference {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub yaw: f64,
    pub yaw_rate: f64,
    pub yaw_accel: f64,
    /// Desired roll progress (rad).
    pub phi: f64,
}
