//! Piecewise analytic box trajectories.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::control::BoxReference;
use crate::geometry::{wrap_angle, Vec3};

/// Heading rule for a segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YawSpec {
    /// Fixed heading (rad).
    Fixed(f64),
    /// Angle of the position about the circle centre.
    Radial,
}

impl Default for YawSpec {
    fn default() -> Self {
        YawSpec::Fixed(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Segment {
    Hold {
        from: f64,
        to: f64,
        position: [f64; 2],
        #[serde(default)]
        yaw: YawSpec,
    },
    Line {
        from: f64,
        to: f64,
        start: [f64; 2],
        velocity: [f64; 2],
        #[serde(default)]
        yaw: YawSpec,
    },
    /// Rest-to-rest quintic between two points.
    SmoothLine {
        from: f64,
        to: f64,
        start: [f64; 2],
        end: [f64; 2],
        #[serde(default)]
        yaw: YawSpec,
    },
    /// `centre + radius (cos th, sin th)` with `th = phase + rate (t - from)`.
    Circle {
        from: f64,
        to: f64,
        centre: [f64; 2],
        radius: f64,
        phase: f64,
        rate: f64,
        #[serde(default = "radial")]
        yaw: YawSpec,
    },
}

fn radial() -> YawSpec {
    YawSpec::Radial
}

/// Planar sample: position, velocity, acceleration, and heading with rates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Sample {
    p: [f64; 2],
    v: [f64; 2],
    a: [f64; 2],
    yaw: f64,
    yaw_rate: f64,
    yaw_accel: f64,
}

/// Quintic rest-to-rest blend `s(tau)` with its first two derivatives.
pub fn quintic(tau: f64) -> (f64, f64, f64) {
    let t = tau.clamp(0.0, 1.0);
    let s = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
    let ds = 30.0 * t * t * (1.0 - t) * (1.0 - t);
    let dds = 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t);
    (s, ds, dds)
}

impl Segment {
    pub fn span(&self) -> (f64, f64) {
        match *self {
            Segment::Hold { from, to, .. }
            | Segment::Line { from, to, .. }
            | Segment::SmoothLine { from, to, .. }
            | Segment::Circle { from, to, .. } => (from, to),
        }
    }

    fn validate(&self) -> Result<(), String> {
        let (from, to) = self.span();
        if !(from.is_finite() && to.is_finite() && to > from) {
            return Err(format!("segment time range [{from}, {to}] must be increasing"));
        }
        if let Segment::Circle { radius, .. } = self {
            if !(*radius > 0.0) {
                return Err(format!("circle radius {radius} must be positive"));
            }
        }
        Ok(())
    }

    fn sample(&self, t: f64) -> Sample {
        let (from, to) = self.span();
        let t = t.clamp(from, to);
        let fixed = |yaw: &YawSpec| match yaw {
            YawSpec::Fixed(y) => *y,
            YawSpec::Radial => 0.0,
        };
        match self {
            Segment::Hold { position, yaw, .. } => Sample { p: *position, yaw: fixed(yaw), ..Default::default() },
            Segment::Line { start, velocity, yaw, .. } => {
                let dt = t - from;
                Sample {
                    p: [start[0] + velocity[0] * dt, start[1] + velocity[1] * dt],
                    v: *velocity,
                    yaw: fixed(yaw),
                    ..Default::default()
                }
            }
            Segment::SmoothLine { start, end, yaw, .. } => {
                let length = to - from;
                let (s, ds, dds) = quintic((t - from) / length);
                let d = [end[0] - start[0], end[1] - start[1]];
                Sample {
                    p: [start[0] + s * d[0], start[1] + s * d[1]],
                    v: [ds * d[0] / length, ds * d[1] / length],
                    a: [dds * d[0] / (length * length), dds * d[1] / (length * length)],
                    yaw: fixed(yaw),
                    ..Default::default()
                }
            }
            Segment::Circle { centre, radius, phase, rate, yaw, .. } => {
                let th = phase + rate * (t - from);
                let (s, c) = th.sin_cos();
                let (yaw, yaw_rate) = match yaw {
                    YawSpec::Radial => (wrap_angle(th), *rate),
                    YawSpec::Fixed(y) => (*y, 0.0),
                };
                Sample {
                    p: [centre[0] + radius * c, centre[1] + radius * s],
                    v: [-radius * rate * s, radius * rate * c],
                    a: [-radius * rate * rate * c, -radius * rate * rate * s],
                    yaw,
                    yaw_rate,
                    yaw_accel: 0.0,
                }
            }
        }
    }

    /// Held value at the end of the segment.
    fn rest_at_end(&self) -> Sample {
        let s = self.sample(self.span().1);
        Sample { p: s.p, yaw: s.yaw, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySpec {
    Builtin(String),
    Segments(Vec<Segment>),
}

/// Names accepted by [`TrajectorySpec::Builtin`].
pub const BUILTIN_TRAJECTORIES: [&str; 3] = ["dragging_semicircle", "rolling_line", "drag_then_roll"];

pub fn builtin_segments(name: &str) -> Option<Vec<Segment>> {
    Some(match name {
        // x = sin t, y = cos t, heading atan2(y, x)
        "dragging_semicircle" => vec![Segment::Circle {
            from: 0.0,
            to: PI,
            centre: [0.0, 0.0],
            radius: 1.0,
            phase: FRAC_PI_2,
            rate: -1.0,
            yaw: YawSpec::Radial,
        }],
        // x = t, y = 0.5
        "rolling_line" => vec![Segment::Line {
            from: 0.0,
            to: 60.0,
            start: [0.0, 0.5],
            velocity: [1.0, 0.0],
            yaw: YawSpec::Fixed(0.0),
        }],
        "drag_then_roll" => vec![
            Segment::Hold { from: 0.0, to: 11.0, position: [0.0, 0.0], yaw: YawSpec::Fixed(0.0) },
            Segment::SmoothLine {
                from: 11.0,
                to: 16.5,
                start: [0.0, 0.0],
                end: [0.4, 0.0],
                yaw: YawSpec::Fixed(0.0),
            },
        ],
        _ => return None,
    })
}

/// A validated trajectory ready for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    segments: Vec<Segment>,
    /// Height of the box centre (m).
    pub height: f64,
}

impl Trajectory {
    pub fn new(spec: &TrajectorySpec, height: f64) -> Result<Self, String> {
        let segments = match spec {
            TrajectorySpec::Builtin(name) => {
                builtin_segments(name).ok_or_else(|| format!("unknown builtin trajectory '{name}'"))?
            }
            TrajectorySpec::Segments(s) => s.clone(),
        };
        if segments.is_empty() {
            return Err("trajectory needs at least one segment".into());
        }
        for s in &segments {
            s.validate()?;
        }
        if segments.windows(2).any(|w| w[1].span().0 < w[0].span().1 - 1e-12) {
            return Err("trajectory segments overlap or are out of order".into());
        }
        Ok(Self { segments, height })
    }

    pub fn end_time(&self) -> f64 {
        self.segments.last().unwrap().span().1
    }

    fn sample(&self, t: f64) -> Sample {
        let active = self.segments.iter().rev().find(|s| s.span().0 <= t).unwrap_or(&self.segments[0]);
        if t > active.span().1 {
            active.rest_at_end()
        } else {
            active.sample(t)
        }
    }

    pub fn reference(&self, t: f64) -> BoxReference {
        let s = self.sample(t);
        BoxReference {
            position: Vec3::new(s.p[0], s.p[1], self.height),
            velocity: Vec3::new(s.v[0], s.v[1], 0.0),
            acceleration: Vec3::new(s.a[0], s.a[1], 0.0),
            yaw: s.yaw,
            yaw_rate: s.yaw_rate,
            yaw_accel: s.yaw_accel,
            phi: 0.0,
        }
    }

    /// Final pose held after the last segment.
    pub fn end_reference(&self) -> BoxReference {
        self.reference(self.end_time() + 1.0)
    }

    /// Horizontal direction the box is asked to move at `t`: the reference
    /// velocity, or else the first visible displacement within `horizon`.
    pub fn motion_direction(&self, t: f64, from: &Vec3, horizon: f64) -> Option<Vec3> {
        let r = self.reference(t);
        if r.velocity.xy().norm() > 1e-6 {
            return Some(r.velocity.normalize());
        }
        let steps = (horizon / 0.1).ceil() as usize;
        (1..=steps).find_map(|k| {
            let ahead = self.reference(t + 0.1 * k as f64).position - from;
            let flat = Vec3::new(ahead.x, ahead.y, 0.0);
            (flat.norm() > 1e-3).then(|| flat.normalize())
        })
    }
}
