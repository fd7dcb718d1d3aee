//! Fixed-step classical Runge-Kutta integration.

use std::convert::Infallible;
use std::ops::{Add, Mul};

use nalgebra::SVector;

/// A continuous state that can be advanced along a rate of change.
pub trait OdeState: Clone {
    type Rate: Clone + Add<Output = Self::Rate> + Mul<f64, Output = Self::Rate>;

    /// `self + h * rate`, without any manifold projection.
    fn advance(&self, rate: &Self::Rate, h: f64) -> Self;

    /// Projection applied once after a full step (rotations are
    /// re-orthonormalised here).
    fn normalize(&mut self) {}
}

impl<const N: usize> OdeState for SVector<f64, N> {
    type Rate = SVector<f64, N>;

    fn advance(&self, rate: &Self::Rate, h: f64) -> Self {
        self + rate * h
    }
}

/// One RK4 step with a fallible derivative.
pub fn try_rk4_step<S, E, F>(state: &S, dt: f64, mut derivative: F) -> Result<S, E>
where
    S: OdeState,
    F: FnMut(&S) -> Result<S::Rate, E>,
{
    debug_assert!(dt > 0.0);
    let half = 0.5 * dt;
    let k1 = derivative(state)?;
    let k2 = derivative(&state.advance(&k1, half))?;
    let k3 = derivative(&state.advance(&k2, half))?;
    let k4 = derivative(&state.advance(&k3, dt))?;
    let rate = (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (1.0 / 6.0);
    let mut next = state.advance(&rate, dt);
    next.normalize();
    Ok(next)
}

pub fn rk4_step<S, F>(state: &S, dt: f64, mut derivative: F) -> S
where
    S: OdeState,
    F: FnMut(&S) -> S::Rate,
{
    match try_rk4_step::<S, Infallible, _>(state, dt, |s| Ok(derivative(s))) {
        Ok(next) => next,
        Err(never) => match never {},
    }
}
