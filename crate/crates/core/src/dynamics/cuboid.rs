//! Box on a planar floor: sliding with Coulomb friction while flat, and a
//! single-degree-of-freedom pivot about a bottom edge while rolling.

use std::f64::consts::FRAC_PI_2;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::geometry::{Mat3, Rotation, Vec3, WorldConstants};

use super::integrator::{try_rk4_step, OdeState};
use super::rigid::{RigidRate, RigidState};
use super::DynamicsError;

/// Speed below which the box counts as resting (m/s).
pub const REST_SPEED: f64 = 1e-9;
const TIP_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxParamsRaw", into = "BoxParamsRaw")]
pub struct BoxParams {
    /// Extent along the body y-axis.
    pub width: f64,
    /// Extent along the body x-axis.
    pub length: f64,
    /// Extent along the body z-axis.
    pub height: f64,
    pub mass: f64,
    pub inertia: Mat3,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxParamsRaw {
    #[serde(default = "default_side")]
    width: f64,
    #[serde(default = "default_side")]
    length: f64,
    #[serde(default = "default_side")]
    height: f64,
    #[serde(default = "default_mass")]
    mass: f64,
    /// Uniform-density inertia when omitted.
    #[serde(default)]
    inertia: Option<[[f64; 3]; 3]>,
}

fn default_side() -> f64 {
    0.155
}

fn default_mass() -> f64 {
    0.08
}

impl TryFrom<BoxParamsRaw> for BoxParams {
    type Error = DynamicsError;
    fn try_from(raw: BoxParamsRaw) -> Result<Self, Self::Error> {
        let uniform = Self::uniform(raw.width, raw.length, raw.height, raw.mass)?;
        match raw.inertia {
            None => Ok(uniform),
            Some(i) => Self::new(raw.width, raw.length, raw.height, raw.mass, Mat3::from_fn(|r, c| i[r][c])),
        }
    }
}

impl From<BoxParams> for BoxParamsRaw {
    fn from(p: BoxParams) -> Self {
        let j = p.inertia;
        let uniform = BoxParams::uniform(p.width, p.length, p.height, p.mass).map(|u| u.inertia);
        Self {
            width: p.width,
            length: p.length,
            height: p.height,
            mass: p.mass,
            inertia: (uniform != Ok(j)).then(|| std::array::from_fn(|r| std::array::from_fn(|c| j[(r, c)]))),
        }
    }
}

impl BoxParams {
    pub fn new(width: f64, length: f64, height: f64, mass: f64, inertia: Mat3) -> Result<Self, DynamicsError> {
        for (name, v) in [("width", width), ("length", length), ("height", height), ("mass", mass)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DynamicsError::InvalidParameter(format!("box {name} {v} must be positive")));
            }
        }
        if (inertia - inertia.transpose()).norm() > 1e-12 || inertia.cholesky().is_none() {
            return Err(DynamicsError::InvalidParameter(
                "box inertia must be symmetric positive definite".into(),
            ));
        }
        Ok(Self { width, length, height, mass, inertia })
    }

    /// Solid cuboid of uniform density.
    pub fn uniform(width: f64, length: f64, height: f64, mass: f64) -> Result<Self, DynamicsError> {
        let k = mass / 12.0;
        let inertia = Mat3::from_diagonal(&Vec3::new(
            k * (width * width + height * height),
            k * (length * length + height * height),
            k * (length * length + width * width),
        ));
        Self::new(width, length, height, mass, inertia)
    }

    /// Half extents along the body axes.
    pub fn half_extents(&self) -> Vec3 {
        Vec3::new(0.5 * self.length, 0.5 * self.width, 0.5 * self.height)
    }
}

impl Default for BoxParams {
    /// A 15.5 cm, 80 g cube.
    fn default() -> Self {
        Self::uniform(default_side(), default_side(), default_side(), default_mass()).unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GroundModelRaw", into = "GroundModelRaw")]
pub struct GroundModel {
    pub mu_static: f64,
    pub mu_kinetic: f64,
    /// Constant world-frame force on the box (stands in for rotor downwash).
    pub disturbance: Vec3,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroundModelRaw {
    mu_static: f64,
    #[serde(default)]
    mu_kinetic: Option<f64>,
    #[serde(default)]
    disturbance: [f64; 3],
}

impl TryFrom<GroundModelRaw> for GroundModel {
    type Error = DynamicsError;
    fn try_from(raw: GroundModelRaw) -> Result<Self, Self::Error> {
        let mut g = Self::new(raw.mu_static, raw.mu_kinetic.unwrap_or(raw.mu_static))?;
        g.disturbance = Vec3::from(raw.disturbance);
        Ok(g)
    }
}

impl From<GroundModel> for GroundModelRaw {
    fn from(g: GroundModel) -> Self {
        Self {
            mu_static: g.mu_static,
            mu_kinetic: Some(g.mu_kinetic),
            disturbance: g.disturbance.into(),
        }
    }
}

impl GroundModel {
    pub fn new(mu_static: f64, mu_kinetic: f64) -> Result<Self, DynamicsError> {
        if !(0.0 <= mu_kinetic && mu_kinetic <= mu_static && mu_static.is_finite()) {
            return Err(DynamicsError::InvalidParameter(format!(
                "friction must satisfy 0 <= mu_k ({mu_kinetic}) <= mu_s ({mu_static})"
            )));
        }
        Ok(Self { mu_static, mu_kinetic, disturbance: Vec3::zeros() })
    }

    pub fn frictionless() -> Self {
        Self::new(0.0, 0.0).unwrap()
    }
}

impl Default for GroundModel {
    fn default() -> Self {
        Self::new(0.3, 0.3).unwrap()
    }
}

/// Force applied at a point fixed on the box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppliedForce {
    /// Application point in the box frame (see [`BoxState::frame_rotation`]).
    pub point: Vec3,
    /// Force in the world frame.
    pub force: Vec3,
}

/// Which bottom edge the box pivots on, named by the outward horizontal
/// normal of the face that leads the roll (in the box frame).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeId {
    PlusX,
    MinusX,
    PlusY,
    MinusY,
}

impl EdgeId {
    pub const ALL: [EdgeId; 4] = [EdgeId::PlusX, EdgeId::MinusX, EdgeId::PlusY, EdgeId::MinusY];

    /// Outward normal in the box frame.
    pub fn normal(self) -> Vec3 {
        match self {
            EdgeId::PlusX => Vec3::x(),
            EdgeId::MinusX => -Vec3::x(),
            EdgeId::PlusY => Vec3::y(),
            EdgeId::MinusY => -Vec3::y(),
        }
    }

    /// Edge leading a roll in the horizontal world direction `dir`.
    pub fn facing(frame: &Rotation, dir: &Vec3) -> EdgeId {
        let local = frame.transpose() * *dir;
        if local.x.abs() >= local.y.abs() {
            if local.x >= 0.0 { EdgeId::PlusX } else { EdgeId::MinusX }
        } else if local.y >= 0.0 {
            EdgeId::PlusY
        } else {
            EdgeId::MinusY
        }
    }
}

/// Geometry of a pivot, frozen at the instant the box leaves the floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pivot {
    pub edge: EdgeId,
    /// Rotation about the edge since lift-off, in [0, pi/2].
    pub angle: f64,
    pub rate: f64,
    /// A point on the pivot edge (world).
    pub edge_point: Vec3,
    /// Unit edge direction; positive rotation tips the box over the edge.
    pub axis: Vec3,
    pub rest_rotation: Rotation,
    pub rest_position: Vec3,
}

impl Pivot {
    pub fn rotation(&self) -> Rotation {
        Rotation::from_axis_angle(&self.axis, self.angle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    FlatOnGround,
    PivotingOnEdge(Pivot),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxState {
    pub body: RigidState,
    pub support: Support,
    /// Signed permutation taking box-frame coordinates to body coordinates.
    /// Identity until the first roll; afterwards it keeps the box frame
    /// upright with a continuous heading.
    pub frame_in_body: Mat3,
}

impl BoxState {
    /// Box resting flat with its centre above `xy` and heading `yaw`.
    pub fn resting(params: &BoxParams, x: f64, y: f64, yaw: f64) -> Self {
        Self {
            body: RigidState::at_rest(Vec3::new(x, y, 0.5 * params.height), Rotation::from_yaw(yaw)),
            support: Support::FlatOnGround,
            frame_in_body: Mat3::identity(),
        }
    }

    /// `wR_b`: rotation of the upright box frame in the world.
    pub fn frame_rotation(&self) -> Rotation {
        Rotation::from_matrix_unchecked(self.body.rotation.matrix() * self.frame_in_body)
    }

    /// Half extents along the box-frame axes.
    pub fn half_extents(&self, params: &BoxParams) -> Vec3 {
        self.frame_in_body.transpose().abs() * params.half_extents()
    }

    pub fn yaw(&self) -> f64 {
        self.frame_rotation().yaw()
    }

    /// World angular velocity.
    pub fn omega_world(&self) -> Vec3 {
        self.body.rotation * self.body.omega
    }

    /// Box-frame point expressed in the world.
    pub fn to_world(&self, point: &Vec3) -> Vec3 {
        self.frame_rotation() * *point + self.body.position
    }

    pub fn pivot_angle(&self) -> f64 {
        match self.support {
            Support::FlatOnGround => 0.0,
            Support::PivotingOnEdge(p) => p.angle,
        }
    }

    /// Inertia about the centre of mass, world frame.
    fn world_inertia(&self, params: &BoxParams) -> Mat3 {
        let r = self.body.rotation.matrix();
        r * params.inertia * r.transpose()
    }
}

/// Normal reaction and net contact-plane force for a flat box.
fn flat_loads(params: &BoxParams, ground: &GroundModel, world: &WorldConstants, forces: &[AppliedForce]) -> (f64, Vec3) {
    let external: Vec3 = forces.iter().map(|f| f.force).sum::<Vec3>() + ground.disturbance;
    let normal = params.mass * world.g - external.z;
    (normal, Vec3::new(external.x, external.y, 0.0))
}

/// Mean distance from the centre of a `2 hx` by `2 hy` rectangle.
pub fn footprint_radius(hx: f64, hy: f64) -> f64 {
    let d = hx.hypot(hy);
    (2.0 * hx * hy * d + hx.powi(3) * ((hy + d) / hx).ln() + hy.powi(3) * ((hx + d) / hy).ln()) / (6.0 * hx * hy)
}

/// Ground friction force and yaw moment on a flat box.
///
/// Uses an ellipsoidal limit surface: the planar force and the moment
/// divided by the footprint radius form one vector of magnitude `mu N`
/// opposing the twist `(v, radius * w)`. Zero when the box sticks.
pub fn ground_friction(
    state: &BoxState,
    params: &BoxParams,
    ground: &GroundModel,
    world: &WorldConstants,
    forces: &[AppliedForce],
) -> Result<(Vec3, f64), DynamicsError> {
    let (normal, tangential) = flat_loads(params, ground, world, forces);
    if normal < 0.0 {
        return Err(DynamicsError::NegativeNormal { normal });
    }
    let radius = flat_radius(state, params);
    let (twist, speed) = twist(state, radius);
    if speed <= REST_SPEED {
        let load = Vec3::new(tangential.x, tangential.y, applied_yaw_moment(state, forces) / radius);
        if load.norm() <= ground.mu_static * normal {
            return Ok((-tangential, -load.z * radius));
        }
        let w = -ground.mu_kinetic * normal * load / load.norm();
        return Ok((Vec3::new(w.x, w.y, 0.0), w.z * radius));
    }
    let w = -ground.mu_kinetic * normal * twist / speed.max(REST_SPEED);
    Ok((Vec3::new(w.x, w.y, 0.0), w.z * radius))
}

/// Planar part of [`ground_friction`].
pub fn friction_force(
    state: &BoxState,
    params: &BoxParams,
    ground: &GroundModel,
    world: &WorldConstants,
    forces: &[AppliedForce],
) -> Result<Vec3, DynamicsError> {
    ground_friction(state, params, ground, world, forces).map(|(f, _)| f)
}

fn flat_radius(state: &BoxState, params: &BoxParams) -> f64 {
    let half = state.half_extents(params);
    footprint_radius(half.x, half.y)
}

/// `(v_x, v_y, radius * w_z)` and its norm.
fn twist(state: &BoxState, radius: f64) -> (Vec3, f64) {
    let v = state.body.velocity;
    let t = Vec3::new(v.x, v.y, radius * state.omega_world().z);
    (t, t.norm())
}

fn applied_yaw_moment(state: &BoxState, forces: &[AppliedForce]) -> f64 {
    let frame = state.frame_rotation();
    forces.iter().map(|f| (frame * f.point).cross(&f.force).z).sum()
}

/// Time derivative of a flat box. Roll and pitch are held at zero; only
/// planar translation and yaw evolve.
pub fn box_derivative(
    state: &BoxState,
    params: &BoxParams,
    ground: &GroundModel,
    world: &WorldConstants,
    forces: &[AppliedForce],
) -> Result<RigidRate, DynamicsError> {
    if !matches!(state.support, Support::FlatOnGround) {
        return Err(DynamicsError::WrongSupport);
    }
    let (_, tangential) = flat_loads(params, ground, world, forces);
    let (friction, friction_moment) = ground_friction(state, params, ground, world, forces)?;
    let acceleration = (tangential + friction) / params.mass;

    let torque = applied_yaw_moment(state, forces) + friction_moment;
    let omega_w = state.omega_world();
    let inertia_w = state.world_inertia(params);
    let gyro = (inertia_w * omega_w).cross(&omega_w);
    let yaw_accel = (torque + gyro.z) / inertia_w[(2, 2)];
    let alpha_w = Vec3::new(0.0, 0.0, yaw_accel);

    let mut rate = RigidRate::kinematic(&state.body, acceleration, state.body.rotation.transpose() * alpha_w);
    rate.velocity.z = 0.0;
    Ok(rate)
}

/// Geometry of a candidate pivot edge for a flat box.
fn edge_geometry(state: &BoxState, params: &BoxParams, edge: EdgeId) -> (Vec3, Vec3) {
    let frame = state.frame_rotation();
    let half = state.half_extents(params);
    let n_local = edge.normal();
    let reach = n_local.component_mul(&half).norm();
    let n = frame * n_local;
    let point = state.body.position + n * reach - WorldConstants::E3 * half.z;
    (point, WorldConstants::E3.cross(&n))
}

/// Edge about which a flat box starts to tip this instant, if any.
///
/// Moments about each bottom edge of the applied loads and gravity are
/// compared with the moment needed to carry the sliding acceleration;
/// friction lies in the floor plane and has no moment about a bottom edge.
pub fn tip_onset(
    state: &BoxState,
    params: &BoxParams,
    ground: &GroundModel,
    world: &WorldConstants,
    forces: &[AppliedForce],
) -> Result<Option<EdgeId>, DynamicsError> {
    let rate = box_derivative(state, params, ground, world, forces)?;
    let frame = state.frame_rotation();
    let com = state.body.position;
    let mut best: Option<(EdgeId, f64)> = None;
    for edge in EdgeId::ALL {
        let (point, axis) = edge_geometry(state, params, edge);
        let applied: f64 = forces
            .iter()
            .map(|f| (frame * f.point + com - point).cross(&f.force).dot(&axis))
            .sum();
        let body_load = -params.mass * world.g * WorldConstants::E3 + ground.disturbance;
        let gravity = (com - point).cross(&body_load).dot(&axis);
        let inertial = (com - point).cross(&(params.mass * rate.acceleration)).dot(&axis);
        let excess = applied + gravity - inertial;
        if excess > TIP_MARGIN && best.is_none_or(|(_, m)| excess > m) {
            best = Some((edge, excess));
        }
    }
    Ok(best.map(|(e, _)| e))
}

/// Starts a pivot about `edge` from a flat box. Linear and angular
/// velocity are dropped: the pivot edge is fixed to the floor.
pub fn begin_pivot(state: &BoxState, params: &BoxParams, edge: EdgeId) -> BoxState {
    let (edge_point, axis) = edge_geometry(state, params, edge);
    let pivot = Pivot {
        edge,
        angle: 0.0,
        rate: 0.0,
        edge_point,
        axis,
        rest_rotation: state.body.rotation,
        rest_position: state.body.position,
    };
    pivot_pose(state, &pivot)
}

fn pivot_pose(state: &BoxState, pivot: &Pivot) -> BoxState {
    let turn = pivot.rotation();
    let offset = turn * (pivot.rest_position - pivot.edge_point);
    let omega_w = pivot.axis * pivot.rate;
    let rotation = turn * pivot.rest_rotation;
    BoxState {
        body: RigidState {
            position: pivot.edge_point + offset,
            velocity: omega_w.cross(&offset),
            rotation,
            omega: rotation.transpose() * omega_w,
        },
        support: Support::PivotingOnEdge(*pivot),
        frame_in_body: state.frame_in_body,
    }
}

/// Moment of inertia about the pivot edge (parallel-axis theorem).
pub fn edge_inertia(state: &BoxState, params: &BoxParams) -> Result<f64, DynamicsError> {
    let Support::PivotingOnEdge(p) = state.support else {
        return Err(DynamicsError::WrongSupport);
    };
    let r = p.rest_rotation.matrix();
    let inertia_w = r * params.inertia * r.transpose();
    let arm = p.rest_position - p.edge_point;
    let perp = arm - p.axis * arm.dot(&p.axis);
    Ok(p.axis.dot(&(inertia_w * p.axis)) + params.mass * perp.norm_squared())
}

/// Gravity moment about the pivot edge; negative pulls the box back down.
pub fn pivot_gravity_torque(state: &BoxState, params: &BoxParams, world: &WorldConstants) -> Result<f64, DynamicsError> {
    let Support::PivotingOnEdge(p) = state.support else {
        return Err(DynamicsError::WrongSupport);
    };
    let arm = state.body.position - p.edge_point;
    Ok(arm.cross(&(-params.mass * world.g * WorldConstants::E3)).dot(&p.axis))
}

/// Angular acceleration about the pivot edge.
pub fn rolling_pivot_derivative(
    state: &BoxState,
    params: &BoxParams,
    ground: &GroundModel,
    world: &WorldConstants,
    forces: &[AppliedForce],
) -> Result<f64, DynamicsError> {
    let Support::PivotingOnEdge(p) = state.support else {
        return Err(DynamicsError::WrongSupport);
    };
    let inertia = edge_inertia(state, params)?;
    let arm = state.body.position - p.edge_point;
    let mut torque = pivot_gravity_torque(state, params, world)? + arm.cross(&ground.disturbance).dot(&p.axis);
    for f in forces {
        let point = state.to_world(&f.point);
        torque += (point - p.edge_point).cross(&f.force).dot(&p.axis);
    }
    Ok(torque / inertia)
}

/// Plastic landing after a quarter roll: the box comes to rest on the next
/// face with its orientation advanced by exactly pi/2 about the edge.
pub fn impact_resolution(state: &BoxState, params: &BoxParams) -> Result<BoxState, DynamicsError> {
    let Support::PivotingOnEdge(p) = state.support else {
        return Err(DynamicsError::WrongSupport);
    };
    if p.angle < FRAC_PI_2 - 1e-9 {
        return Err(DynamicsError::WrongSupport);
    }
    let landed = Pivot { angle: FRAC_PI_2, rate: 0.0, ..p };
    let mut next = pivot_pose(state, &landed);
    // heading from the pose before the pivot; after a quarter turn the
    // frame x axis points almost straight down
    let heading = p.rest_rotation * (state.frame_in_body * Vec3::x());
    next.frame_in_body = upright_frame(&next.body.rotation, &Vec3::new(heading.x, heading.y, 0.0));
    next.support = Support::FlatOnGround;
    next.body.velocity = Vec3::zeros();
    next.body.omega = Vec3::zeros();
    next.body.position.z = next.half_extents(params).z;
    Ok(next)
}

/// Box settling back onto its original face after an aborted roll.
fn settle(state: &BoxState, params: &BoxParams, pivot: &Pivot) -> BoxState {
    let mut next = BoxState {
        body: RigidState::at_rest(pivot.rest_position, pivot.rest_rotation),
        support: Support::FlatOnGround,
        frame_in_body: state.frame_in_body,
    };
    next.body.position.z = next.half_extents(params).z;
    next
}

/// Signed permutation whose z column is the body axis pointing up and whose
/// x column is the horizontal body axis closest to `heading`.
fn upright_frame(rotation: &Rotation, heading: &Vec3) -> Mat3 {
    let r = rotation.matrix();
    let axis_towards = |dir: &Vec3, skip: Option<usize>| {
        let mut best = (0usize, 0.0f64);
        for k in 0..3 {
            if Some(k) == skip {
                continue;
            }
            let c = r.column(k).dot(dir);
            if c.abs() > best.1.abs() {
                best = (k, c);
            }
        }
        let mut v = Vec3::zeros();
        v[best.0] = best.1.signum();
        (best.0, v)
    };
    let (up_index, z) = axis_towards(&WorldConstants::E3, None);
    let (_, x) = if heading.norm() > 0.0 {
        axis_towards(heading, Some(up_index))
    } else {
        let mut v = Vec3::zeros();
        v[(up_index + 1) % 3] = 1.0;
        ((up_index + 1) % 3, v)
    };
    let y = z.cross(&x);
    Mat3::from_columns(&[x, y, z])
}

/// What happened to the support during a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SupportEvent {
    Tipped(EdgeId),
    Landed,
    Settled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStep {
    pub state: BoxState,
    pub event: Option<SupportEvent>,
}

impl OdeState for BoxState {
    type Rate = RigidRate;

    fn advance(&self, rate: &RigidRate, h: f64) -> Self {
        Self { body: self.body.advance(rate, h), ..*self }
    }

    fn normalize(&mut self) {
        self.body.normalize();
    }
}

/// Advances the box by `dt` with the applied forces held constant.
pub fn step_box(
    state: &BoxState,
    params: &BoxParams,
    ground: &GroundModel,
    world: &WorldConstants,
    forces: &[AppliedForce],
    dt: f64,
) -> Result<BoxStep, DynamicsError> {
    match state.support {
        Support::FlatOnGround => {
            if let Some(edge) = tip_onset(state, params, ground, world, forces)? {
                let pivoting = begin_pivot(state, params, edge);
                let mut step = step_pivot(&pivoting, params, ground, world, forces, dt)?;
                step.event = step.event.or(Some(SupportEvent::Tipped(edge)));
                return Ok(step);
            }
            step_flat(state, params, ground, world, forces, dt).map(|state| BoxStep { state, event: None })
        }
        Support::PivotingOnEdge(_) => step_pivot(state, params, ground, world, forces, dt),
    }
}

fn step_flat(
    state: &BoxState,
    params: &BoxParams,
    ground: &GroundModel,
    world: &WorldConstants,
    forces: &[AppliedForce],
    dt: f64,
) -> Result<BoxState, DynamicsError> {
    let mut next = try_rk4_step(state, dt, |s| box_derivative(s, params, ground, world, forces))?;
    // Friction that would stop the box inside this step: the RK4 stages
    // straddle the discontinuity, so stop it analytically and let it stick
    // if the static limit holds.
    let radius = flat_radius(state, params);
    let (xi, speed) = twist(state, radius);
    if speed > REST_SPEED {
        let (normal, tangential) = flat_loads(params, ground, world, forces);
        let rate = box_derivative(state, params, ground, world, forces)?;
        let alpha = (state.body.rotation * rate.angular_acceleration).z;
        let dxi = Vec3::new(rate.acceleration.x, rate.acceleration.y, radius * alpha);
        let decel = -dxi.dot(&xi) / speed;
        let stops = decel > 0.0 && speed <= decel * dt;
        let (next_xi, _) = twist(&next, radius);
        let load = Vec3::new(tangential.x, tangential.y, applied_yaw_moment(state, forces) / radius);
        if (stops || next_xi.dot(&xi) <= 0.0) && load.norm() <= ground.mu_static * normal {
            let t_stop = if decel > 0.0 { (speed / decel).min(dt) } else { 0.0 };
            let travel = 0.5 * t_stop * state.body.velocity;
            let turn = 0.5 * t_stop * state.omega_world().z;
            next.body.position.x = state.body.position.x + travel.x;
            next.body.position.y = state.body.position.y + travel.y;
            next.body.rotation = Rotation::from_yaw(turn) * state.body.rotation;
            next.body.velocity = Vec3::zeros();
            next.body.omega = Vec3::zeros();
        }
    }
    next.body.position.z = state.body.position.z;
    next.body.velocity.z = 0.0;
    Ok(next)
}

fn step_pivot(
    state: &BoxState,
    params: &BoxParams,
    ground: &GroundModel,
    world: &WorldConstants,
    forces: &[AppliedForce],
    dt: f64,
) -> Result<BoxStep, DynamicsError> {
    let Support::PivotingOnEdge(pivot) = state.support else {
        return Err(DynamicsError::WrongSupport);
    };
    let start = Vector2::new(pivot.angle, pivot.rate);
    let next = try_rk4_step(&start, dt, |y: &Vector2<f64>| {
        let probe = pivot_pose(state, &Pivot { angle: y[0], rate: y[1], ..pivot });
        rolling_pivot_derivative(&probe, params, ground, world, forces).map(|acc| Vector2::new(y[1], acc))
    })?;
    if next[0] >= FRAC_PI_2 {
        let at_floor = pivot_pose(state, &Pivot { angle: FRAC_PI_2, rate: next[1], ..pivot });
        return Ok(BoxStep { state: impact_resolution(&at_floor, params)?, event: Some(SupportEvent::Landed) });
    }
    if next[0] <= 0.0 && next[1] <= 0.0 {
        return Ok(BoxStep { state: settle(state, params, &pivot), event: Some(SupportEvent::Settled) });
    }
    let moved = pivot_pose(state, &Pivot { angle: next[0], rate: next[1], ..pivot });
    Ok(BoxStep { state: moved, event: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_4;

    fn cube() -> BoxParams {
        BoxParams::default()
    }

    fn pull(point: Vec3, force: Vec3) -> AppliedForce {
        AppliedForce { point, force }
    }

    #[test]
    fn resting_box_without_load_stays() {
        let p = cube();
        let s = BoxState::resting(&p, 0.0, 0.0, 0.3);
        let g = GroundModel::new(0.3, 0.3).unwrap();
        let d = box_derivative(&s, &p, &g, &WorldConstants::default(), &[]).unwrap();
        assert_eq!(d.acceleration, Vec3::zeros());
        assert_eq!(d.angular_acceleration, Vec3::zeros());
    }

    #[test]
    fn coulomb_breakaway_acceleration() {
        let p = cube();
        let s = BoxState::resting(&p, 0.0, 0.0, 0.0);
        let g = GroundModel::new(0.3, 0.3).unwrap();
        let f = [pull(Vec3::zeros(), Vec3::new(0.5, 0.0, 0.0))];
        let d = box_derivative(&s, &p, &g, &WorldConstants::default(), &f).unwrap();
        // (0.5 - 0.3 * 0.08 * 9.81) / 0.08
        assert_relative_eq!(d.acceleration.norm(), 3.307, epsilon = 1e-12);
    }

    #[test]
    fn static_cone_holds() {
        let p = cube();
        let s = BoxState::resting(&p, 0.0, 0.0, 0.0);
        let g = GroundModel::new(0.3, 0.3).unwrap();
        let f = [pull(Vec3::zeros(), Vec3::new(0.1, 0.0, 0.0))];
        let d = box_derivative(&s, &p, &g, &WorldConstants::default(), &f).unwrap();
        assert_eq!(d.acceleration, Vec3::zeros());
    }

    #[test]
    fn lift_off_is_reported() {
        let p = cube();
        let s = BoxState::resting(&p, 0.0, 0.0, 0.0);
        let g = GroundModel::new(0.3, 0.3).unwrap();
        let f = [pull(Vec3::zeros(), Vec3::new(0.0, 0.0, 1.0))];
        let err = box_derivative(&s, &p, &g, &WorldConstants::default(), &f).unwrap_err();
        assert!(matches!(err, DynamicsError::NegativeNormal { .. }));
    }

    fn pivoting_at(angle: f64) -> (BoxParams, BoxState) {
        let p = cube();
        let flat = BoxState::resting(&p, 0.0, 0.0, 0.0);
        let mut s = begin_pivot(&flat, &p, EdgeId::PlusX);
        if let Support::PivotingOnEdge(pv) = s.support {
            s = pivot_pose(&s, &Pivot { angle, ..pv });
        }
        (p, s)
    }

    #[test]
    fn gravity_torque_about_edge() {
        let w = WorldConstants::default();
        let (p, s) = pivoting_at(0.0);
        // m g w / 2 = 0.08 * 9.81 * 0.0775
        assert_relative_eq!(pivot_gravity_torque(&s, &p, &w).unwrap(), -0.060_822, epsilon = 1e-12);
        let (p, s) = pivoting_at(FRAC_PI_4);
        assert!(pivot_gravity_torque(&s, &p, &w).unwrap().abs() < 1e-15);
        let (p, s) = pivoting_at(FRAC_PI_4 + 1e-3);
        let g = GroundModel::new(0.8, 0.8).unwrap();
        assert!(rolling_pivot_derivative(&s, &p, &g, &w, &[]).unwrap() > 0.0);
    }

    #[test]
    fn edge_inertia_parallel_axis() {
        let (p, s) = pivoting_at(0.3);
        let side: f64 = 0.155;
        let expected = p.mass * side * side / 6.0 + p.mass * 2.0 * (side / 2.0).powi(2);
        assert_relative_eq!(edge_inertia(&s, &p).unwrap(), expected, epsilon = 1e-15);
    }

    #[test]
    fn quarter_roll_landing() {
        let (p, s) = pivoting_at(FRAC_PI_2);
        let before = s;
        let landed = impact_resolution(&s, &p).unwrap();
        assert_relative_eq!(landed.body.position.x, 0.155, epsilon = 1e-12);
        assert_relative_eq!(landed.body.position.z, 0.0775, epsilon = 1e-12);
        assert_eq!(landed.body.velocity, Vec3::zeros());
        assert_eq!(landed.body.omega, Vec3::zeros());
        assert_eq!(landed.support, Support::FlatOnGround);
        let Support::PivotingOnEdge(pv) = before.support else { unreachable!() };
        let expected = Rotation::from_axis_angle(&pv.axis, FRAC_PI_2) * pv.rest_rotation;
        assert!((landed.body.rotation.matrix() - expected.matrix()).norm() < 1e-12);
        // box frame stays upright with unchanged heading
        let frame = landed.frame_rotation();
        assert!((frame.matrix() - Mat3::identity()).norm() < 1e-12);
    }

    #[test]
    fn pivot_edge_does_not_move() {
        let w = WorldConstants::default();
        let g = GroundModel::new(0.8, 0.8).unwrap();
        let (p, mut s) = pivoting_at(0.2);
        let Support::PivotingOnEdge(pv) = s.support else { unreachable!() };
        let edge_local = s.frame_rotation().transpose() * (pv.edge_point - s.body.position);
        let f = [pull(Vec3::new(-0.0775, 0.0, 0.0425), Vec3::new(0.6, 0.0, 0.2))];
        for _ in 0..200 {
            let step = step_box(&s, &p, &g, &w, &f, 1e-3).unwrap();
            s = step.state;
            if !matches!(s.support, Support::PivotingOnEdge(_)) {
                break;
            }
            let edge_now = s.to_world(&edge_local);
            assert!((edge_now - pv.edge_point).norm() < 1e-9);
        }
    }

    #[test]
    fn frictionless_slide_conserves_energy() {
        let p = cube();
        let w = WorldConstants::default();
        let g = GroundModel::frictionless();
        let mut s = BoxState::resting(&p, 0.0, 0.0, 0.0);
        s.body.velocity = Vec3::new(0.7, -0.2, 0.0);
        s.body.omega = Vec3::new(0.0, 0.0, 1.3);
        let energy = |s: &BoxState| {
            0.5 * p.mass * s.body.velocity.norm_squared() + 0.5 * s.body.omega.dot(&(p.inertia * s.body.omega))
        };
        let e0 = energy(&s);
        for _ in 0..10_000 {
            s = step_box(&s, &p, &g, &w, &[], 1e-3).unwrap().state;
        }
        assert!(((energy(&s) - e0) / e0).abs() < 1e-8);
    }

    #[test]
    fn sliding_box_stops_and_sticks() {
        let p = cube();
        let w = WorldConstants::default();
        let g = GroundModel::new(0.3, 0.3).unwrap();
        let mut s = BoxState::resting(&p, 0.0, 0.0, 0.0);
        s.body.velocity = Vec3::new(0.5, 0.0, 0.0);
        for _ in 0..1000 {
            s = step_box(&s, &p, &g, &w, &[], 1e-3).unwrap().state;
        }
        assert_eq!(s.body.velocity, Vec3::zeros());
        // v^2 / (2 mu g)
        assert!((s.body.position.x - 0.25 / (2.0 * 0.3 * 9.81)).abs() < 1e-3);
    }

    #[test]
    fn high_pull_tips_low_pull_slides() {
        let p = cube();
        let w = WorldConstants::default();
        let s = BoxState::resting(&p, 0.0, 0.0, 0.0);
        let g = GroundModel::new(0.9, 0.9).unwrap();
        let high = [pull(Vec3::new(-0.0775, 0.0, 0.0425), Vec3::new(0.6, 0.0, 0.0))];
        assert_eq!(tip_onset(&s, &p, &g, &w, &high).unwrap(), Some(EdgeId::PlusX));
        let low = [pull(Vec3::new(-0.0775, 0.0, -0.0675), Vec3::new(0.6, 0.0, 0.0))];
        assert_eq!(tip_onset(&s, &p, &g, &w, &low).unwrap(), None);
    }

    #[test]
    fn footprint_radius_matches_quadrature() {
        // two-dimensional quadrature of the mean radius
        assert_relative_eq!(footprint_radius(1.0, 1.0), 0.7651957164642127, epsilon = 1e-12);
        assert_relative_eq!(footprint_radius(0.0775, 0.0775), 0.059302668025976474, epsilon = 1e-12);
        assert_relative_eq!(footprint_radius(0.04, 0.1), 0.05654518676166607, epsilon = 1e-12);
        assert_relative_eq!(footprint_radius(0.1, 0.04), footprint_radius(0.04, 0.1), epsilon = 1e-15);
    }

    #[test]
    fn spinning_box_stops() {
        let p = cube();
        let w = WorldConstants::default();
        let g = GroundModel::new(0.3, 0.3).unwrap();
        let mut s = BoxState::resting(&p, 0.0, 0.0, 0.0);
        s.body.omega = Vec3::new(0.0, 0.0, 5.0);
        let mut stopped = None;
        for k in 0..2000 {
            s = step_box(&s, &p, &g, &w, &[], 1e-3).unwrap().state;
            if s.body.omega.norm() == 0.0 {
                stopped = Some(k);
                break;
            }
        }
        // pure spin decelerates at mu g radius / (J_zz / m)
        let decel = 0.3 * w.g * footprint_radius(0.0775, 0.0775) / (p.inertia[(2, 2)] / p.mass);
        let expected = (5.0 / decel / 1e-3).ceil() as usize;
        let k = stopped.expect("spin stops");
        assert!(k + 1 >= expected - 1 && k < expected + 1, "{k} vs {expected}");
        assert_eq!(s.body.position.xy(), Vector2::zeros());
    }

    #[test]
    fn off_centre_pull_below_the_limit_sticks() {
        let p = cube();
        let w = WorldConstants::default();
        let g = GroundModel::new(0.3, 0.3).unwrap();
        let s = BoxState::resting(&p, 0.0, 0.0, 0.0);
        let f = [pull(Vec3::new(-0.0775, 0.07, -0.07), Vec3::new(0.1, 0.0, 0.0))];
        let d = box_derivative(&s, &p, &g, &w, &f).unwrap();
        assert_eq!(d.acceleration, Vec3::zeros());
        assert_eq!(d.angular_acceleration, Vec3::zeros());
    }

    proptest! {
        #[test]
        fn friction_never_injects_power(
            vx in -2.0..2.0f64, vy in -2.0..2.0f64, wz in -5.0..5.0f64, fx in -2.0..2.0f64, fy in -2.0..2.0f64,
            mu in 0.0..1.2f64,
        ) {
            let p = cube();
            let mut s = BoxState::resting(&p, 0.0, 0.0, 0.0);
            s.body.velocity = Vec3::new(vx, vy, 0.0);
            s.body.omega = Vec3::new(0.0, 0.0, wz);
            let g = GroundModel::new(mu, mu).unwrap();
            let f = [pull(Vec3::zeros(), Vec3::new(fx, fy, 0.0))];
            let (fr, moment) = ground_friction(&s, &p, &g, &WorldConstants::default(), &f).unwrap();
            prop_assert!(fr.dot(&s.body.velocity) + moment * s.omega_world().z <= 0.0);
        }

        #[test]
        fn static_cone_gives_zero_acceleration(angle in 0.0..std::f64::consts::TAU, frac in 0.0..1.0f64, mu in 0.0..1.2f64) {
            let p = cube();
            let w = WorldConstants::default();
            let s = BoxState::resting(&p, 0.0, 0.0, 0.0);
            let g = GroundModel::new(mu, mu).unwrap();
            let mag = frac * mu * p.mass * w.g;
            let f = [pull(Vec3::zeros(), Vec3::new(mag * angle.cos(), mag * angle.sin(), 0.0))];
            let d = box_derivative(&s, &p, &g, &w, &f).unwrap();
            prop_assert_eq!(d.acceleration, Vec3::zeros());
        }
    }
}
