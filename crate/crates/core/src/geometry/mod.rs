//! Rotation-group primitives and catenary curve geometry.

mod catenary;
mod rotation;

pub use catenary::{sample_catenary, solve_catenary, symmetric_sag, CatenaryError, CatenaryShape};
pub use rotation::{hat, rot_axis_angle, vee, wrap_angle, Axis, Rotation};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

/// Slack margin below which a cable path is treated as taut (m).
pub const TAUT_EPSILON: f64 = 1e-3;

/// Gravity and the canonical basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldConstants {
    pub g: f64,
}

impl WorldConstants {
    pub const E1: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const E2: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const E3: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub fn new(g: f64) -> Option<Self> {
        (g > 0.0 && g.is_finite()).then_some(Self { g })
    }
}

impl Default for WorldConstants {
    fn default() -> Self {
        Self { g: 9.81 }
    }
}
