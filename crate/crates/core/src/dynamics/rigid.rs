use std::ops::{Add, Mul};

use crate::geometry::{hat, Mat3, Rotation, Vec3};

use super::integrator::OdeState;

/// Position and velocity in the world frame, attitude body-to-world and
/// angular velocity in the body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub rotation: Rotation,
    pub omega: Vec3,
}

impl RigidState {
    pub fn at_rest(position: Vec3, rotation: Rotation) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
            rotation,
            omega: Vec3::zeros(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidRate {
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub rotation: Mat3,
    pub angular_acceleration: Vec3,
}

impl RigidRate {
    pub fn zero() -> Self {
        Self {
            velocity: Vec3::zeros(),
            acceleration: Vec3::zeros(),
            rotation: Mat3::zeros(),
            angular_acceleration: Vec3::zeros(),
        }
    }

    /// Rate with the attitude derivative `R hat(omega)` filled in.
    pub(crate) fn kinematic(state: &RigidState, acceleration: Vec3, angular_acceleration: Vec3) -> Self {
        Self {
            velocity: state.velocity,
            acceleration,
            rotation: state.rotation.matrix() * hat(&state.omega),
            angular_acceleration,
        }
    }
}

impl Add for RigidRate {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            velocity: self.velocity + o.velocity,
            acceleration: self.acceleration + o.acceleration,
            rotation: self.rotation + o.rotation,
            angular_acceleration: self.angular_acceleration + o.angular_acceleration,
        }
    }
}

impl Mul<f64> for RigidRate {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self {
            velocity: self.velocity * k,
            acceleration: self.acceleration * k,
            rotation: self.rotation * k,
            angular_acceleration: self.angular_acceleration * k,
        }
    }
}

impl OdeState for RigidState {
    type Rate = RigidRate;

    fn advance(&self, rate: &RigidRate, h: f64) -> Self {
        Self {
            position: self.position + rate.velocity * h,
            velocity: self.velocity + rate.acceleration * h,
            rotation: Rotation::from_matrix_unchecked(self.rotation.matrix() + rate.rotation * h),
            omega: self.omega + rate.angular_acceleration * h,
        }
    }

    fn normalize(&mut self) {
        self.rotation = self.rotation.orthonormalized();
    }
}
