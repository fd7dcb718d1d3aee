use thiserror::Error;

use super::{Vec3, TAUT_EPSILON};

const RESIDUAL_TOL: f64 = 1e-12;
const MAX_ITERATIONS: usize = 200;
const MIN_HORIZONTAL_SPAN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum CatenaryError {
    #[error("endpoint distance {chord} m leaves no slack for cable length {length} m")]
    TautOrOverstretched { chord: f64, length: f64 },
    #[error("endpoints are vertically aligned (horizontal span {span} m)")]
    DegenerateVertical { span: f64 },
    #[error("catenary parameter did not converge (residual {residual})")]
    NotConverged { residual: f64 },
}

/// A hanging inextensible cable between two points.
///
/// The curve lives in the vertical plane through both endpoints. With `u`
/// the horizontal coordinate measured from endpoint 1 towards endpoint 2,
/// its height is `z1 + a (cosh((u - u0)/a) - cosh(u0/a))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatenaryShape {
    pub endpoints: [Vec3; 2],
    pub length: f64,
    /// Heading of the horizontal direction from endpoint 1 to endpoint 2.
    pub plane_yaw: f64,
    /// Horizontal endpoint separation.
    pub span: f64,
    /// Catenary scale.
    pub a: f64,
    /// Horizontal coordinate of the vertex (may lie outside `[0, span]`).
    pub vertex_u: f64,
    /// Lowest point of the cable itself; the vertex when it lies between the
    /// endpoints, otherwise the lower endpoint.
    pub lowest_point: Vec3,
}

impl CatenaryShape {
    fn direction(&self) -> Vec3 {
        Vec3::new(self.plane_yaw.cos(), self.plane_yaw.sin(), 0.0)
    }

    fn height_at(&self, u: f64) -> f64 {
        let a = self.a;
        self.endpoints[0].z + a * (((u - self.vertex_u) / a).cosh() - (self.vertex_u / a).cosh())
    }

    /// Point at horizontal coordinate `u` along the plane.
    pub fn point_at_horizontal(&self, u: f64) -> Vec3 {
        let mut p = self.endpoints[0] + self.direction() * u;
        p.z = self.height_at(u);
        p
    }

    /// Horizontal coordinate reached after arc length `s` from endpoint 1.
    pub fn horizontal_at_arclength(&self, s: f64) -> f64 {
        let a = self.a;
        self.vertex_u + a * (s / a - (self.vertex_u / a).sinh()).asinh()
    }

    pub fn point_at_arclength(&self, s: f64) -> Vec3 {
        self.point_at_horizontal(self.horizontal_at_arclength(s))
    }

    /// Closed-form arc length between the endpoints.
    pub fn arc_length(&self) -> f64 {
        let a = self.a;
        a * (((self.span - self.vertex_u) / a).sinh() + (self.vertex_u / a).sinh())
    }

    /// Slope `dz/du` at horizontal coordinate `u`.
    pub fn slope_at(&self, u: f64) -> f64 {
        ((u - self.vertex_u) / self.a).sinh()
    }
}

/// Fits the catenary of length `length` hanging between `endpoints`.
pub fn solve_catenary(endpoints: [Vec3; 2], length: f64) -> Result<CatenaryShape, CatenaryError> {
    let [p1, p2] = endpoints;
    let delta = p2 - p1;
    let chord = delta.norm();
    if chord >= length - TAUT_EPSILON {
        return Err(CatenaryError::TautOrOverstretched { chord, length });
    }
    let span = delta.xy().norm();
    if span < MIN_HORIZONTAL_SPAN {
        return Err(CatenaryError::DegenerateVertical { span });
    }
    let rise = delta.z;
    let target = (length * length - rise * rise).sqrt();
    let a = solve_scale(span, target)?;
    let vertex_u = 0.5 * span - a * (rise / length).atanh();

    let mut shape = CatenaryShape {
        endpoints,
        length,
        plane_yaw: delta.y.atan2(delta.x),
        span,
        a,
        vertex_u,
        lowest_point: p1,
    };
    shape.lowest_point = if (0.0..=span).contains(&vertex_u) {
        shape.point_at_horizontal(vertex_u)
    } else if p1.z <= p2.z {
        p1
    } else {
        p2
    };
    Ok(shape)
}

/// Solves `2a sinh(span / 2a) = target` for `a`, with `target > span`.
///
/// Newton iteration inside a maintained bracket; any step that leaves the
/// bracket is replaced by bisection.
fn solve_scale(span: f64, target: f64) -> Result<f64, CatenaryError> {
    let residual = |a: f64| 2.0 * a * (span / (2.0 * a)).sinh() - target;
    let slope = |a: f64| {
        let x = span / (2.0 * a);
        2.0 * (x.sinh() - x * x.cosh())
    };

    // residual is strictly decreasing in a
    let mut hi = 0.5 * span;
    while residual(hi) > 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.5 * span;
    while residual(lo) < 0.0 {
        lo *= 0.5;
    }
    if lo == hi {
        return Ok(lo);
    }

    // start from the small-sag approximation sinh(x)/x ~ 1 + x^2/6
    let guess = span / (2.0 * (6.0 * (target / span - 1.0)).sqrt());
    let mut a = if guess > lo && guess < hi { guess } else { 0.5 * (lo + hi) };
    let mut r = residual(a);
    for _ in 0..MAX_ITERATIONS {
        if r.abs() <= RESIDUAL_TOL {
            return Ok(a);
        }
        if r > 0.0 {
            lo = a;
        } else {
            hi = a;
        }
        let newton = a - r / slope(a);
        a = if newton > lo && newton < hi && newton.is_finite() {
            newton
        } else {
            0.5 * (lo + hi)
        };
        r = residual(a);
    }
    if r.abs() <= RESIDUAL_TOL {
        Ok(a)
    } else {
        Err(CatenaryError::NotConverged { residual: r })
    }
}

/// `n` points spaced evenly in arc length, from endpoint 1 to endpoint 2.
pub fn sample_catenary(shape: &CatenaryShape, n: usize) -> Vec<Vec3> {
    assert!(n >= 2, "need at least two samples");
    let mut points: Vec<Vec3> = (0..n)
        .map(|k| shape.point_at_arclength(shape.length * k as f64 / (n - 1) as f64))
        .collect();
    points[0] = shape.endpoints[0];
    points[n - 1] = shape.endpoints[1];
    points
}

/// Depth of the lowest point below two equal-height endpoints `span` apart.
pub fn symmetric_sag(span: f64, length: f64) -> Result<f64, CatenaryError> {
    let shape = solve_catenary([Vec3::zeros(), Vec3::new(span, 0.0, 0.0)], length)?;
    Ok(-shape.lowest_point.z)
}
