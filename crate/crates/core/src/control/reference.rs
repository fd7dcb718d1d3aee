use crate::geometry::{hat, Rotation, Vec3};
use crate::planner::ContactPlacement;

use super::{BoxReference, ControlError};

/// Desired motion of one quadrotor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuadReference {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub yaw: f64,
    /// Altitude was raised to the floor limit.
    pub clamped: bool,
}

impl QuadReference {
    /// Holds a position with zero velocity.
    pub fn hold(position: Vec3, yaw: f64) -> Self {
        Self { position, yaw, ..Default::default() }
    }

    fn clamp_altitude(mut self, min_altitude: f64) -> Self {
        if self.position.z < min_altitude {
            self.position.z = min_altitude;
            self.velocity.z = 0.0;
            self.acceleration.z = 0.0;
            self.clamped = true;
        }
        self
    }
}

/// Heading of the frame the placement is expressed in, with its rates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameMotion {
    pub yaw: f64,
    pub rate: f64,
    pub accel: f64,
}

impl FrameMotion {
    /// The desired box frame turned by `offset` (a face choice).
    pub fn from_reference(reference: &BoxReference, offset: f64) -> Self {
        Self { yaw: reference.yaw + offset, rate: reference.yaw_rate, accel: reference.yaw_accel }
    }
}

/// Quadrotor references carried rigidly with the desired box pose:
/// `r = r_b + R b`, `v = v_b + R [w] b`, `a = a_b + R ([w]^2 + [dw]) b`.
pub fn quad_reference_from_box(
    reference: &BoxReference,
    placement: &ContactPlacement,
    frame: &FrameMotion,
    yaw_setpoint: f64,
    min_altitude: f64,
) -> [QuadReference; 2] {
    let rotation = Rotation::from_yaw(frame.yaw);
    let w = hat(&Vec3::new(0.0, 0.0, frame.rate));
    let dw = hat(&Vec3::new(0.0, 0.0, frame.accel));
    placement.quad_offsets().map(|b| {
        let r = rotation.matrix();
        QuadReference {
            position: reference.position + r * b,
            velocity: reference.velocity + r * w * b,
            acceleration: reference.acceleration + r * (w * w + dw) * b,
            yaw: yaw_setpoint,
            clamped: false,
        }
        .clamp_altitude(min_altitude)
    })
}

/// Quadrotors held at `free_length` along fixed world directions from
/// moving contact points.
pub fn quads_from_contacts(
    contacts: &[(Vec3, Vec3, Vec3); 2],
    directions: &[Vec3; 2],
    free_length: f64,
    yaw_setpoint: f64,
    min_altitude: f64,
) -> [QuadReference; 2] {
    std::array::from_fn(|i| {
        let (p, v, a) = contacts[i];
        QuadReference {
            position: p + free_length * directions[i],
            velocity: v,
            acceleration: a,
            yaw: yaw_setpoint,
            clamped: false,
        }
        .clamp_altitude(min_altitude)
    })
}

/// Tracks how long the references have been pinned at the floor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FloorMonitor {
    /// Longest tolerated clamp (s); `None` never errors.
    pub timeout: Option<f64>,
    held: f64,
}

impl FloorMonitor {
    pub fn new(timeout: Option<f64>) -> Self {
        Self { timeout, held: 0.0 }
    }

    pub fn update(&mut self, references: &[QuadReference; 2], dt: f64) -> Result<(), ControlError> {
        if references.iter().any(|r| r.clamped) {
            self.held += dt;
        } else {
            self.held = 0.0;
        }
        match self.timeout {
            Some(limit) if self.held > limit => Err(ControlError::FloorViolation { duration: self.held }),
            _ => Ok(()),
        }
    }
}
