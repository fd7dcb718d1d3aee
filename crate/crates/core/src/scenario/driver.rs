//! Closed-loop simulation: box, two quadrotors, cable model, controllers
//! and the contact automaton stepped together on one fixed grid.

use std::f64::consts::FRAC_PI_2;
use std::io::{self, Write};

use thiserror::Error;

use crate::cable::{
    contact_point_world, detect_contact, detect_taut, tension_from_box_wrench, tension_nonnegative, ContactAngles,
    ContactPoint,
};
use crate::control::{
    box_wrench_pid, friction_feedforward, pull_heading, quad_reference_from_box, quads_from_contacts,
    roll_force_command, se3_controller, yaw_command, BoxReference, ControlError, FloorMonitor, FrameMotion,
    IntegralState, QuadReference, RollReference,
};
use crate::dynamics::{
    begin_pivot, step_box, step_quadrotor, AppliedForce, BoxState, DynamicsError, EdgeId, QuadrotorState, RigidState,
    Support, SupportEvent,
};
use crate::geometry::{solve_catenary, wrap_angle, Rotation, Vec3, WorldConstants};
use crate::modes::{step_mode, ActionKind, GuardConditions, GuardEvent, GuardMonitor, Mode, ModeSchedule};
use crate::planner::{
    approach_waypoints, choose_action, face_yaw_for, plan_placement, ApproachPlan, ContactPlacement, PlannerError,
    APPROACH_SPEED,
};

use super::config::{ConfigError, ScenarioConfig};
use super::log::{write_preamble, LogRecord};
use super::trajectory::{quintic, Trajectory};

/// Any state component beyond this magnitude ends the run.
pub const DIVERGENCE_LIMIT: f64 = 1e3;
/// Drag is complete within this distance (m) and heading (rad) of the end pose.
pub const COMPLETE_DISTANCE: f64 = 0.02;
pub const COMPLETE_YAW: f64 = 0.05;
/// Cable elevation used when re-planning after a slip.
pub const SLIP_REPLAN_GAMMA: f64 = std::f64::consts::PI / 12.0;
/// Duration of the final move from the cable's touch point to the placement (s).
pub const ENGAGE_TIME: f64 = 1.5;
/// Share of the box weight the cables may lift while dragging.
pub const LIFT_SHARE: f64 = 0.5;
const MOTION_HORIZON: f64 = 15.0;
const FD_STEP: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation diverged at t = {t:.4} s")]
    SimulationDiverged { t: f64 },
    #[error("control failure at t = {t:.4} s: {source}")]
    Control { t: f64, source: ControlError },
    #[error("planning failure at t = {t:.4} s: {source}")]
    Planner { t: f64, source: PlannerError },
    #[error("box dynamics failure at t = {t:.4} s: {source}")]
    Dynamics { t: f64, source: DynamicsError },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Counters gathered over a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    /// Steps in which both cable ends carried the commanded load.
    pub taut_steps: usize,
    /// Largest planar mismatch between commanded tensions and box force
    /// over the taut steps (N).
    pub max_backsub_error: f64,
    /// Steps where no non-negative tension pair matched the demand, so one
    /// end went slack and the best non-negative fit was sent instead.
    pub infeasible_steps: usize,
    /// Roll steps where the cable had no leverage about the pivot edge.
    pub no_authority_steps: usize,
    pub lift_off_steps: usize,
    pub completed_rolls: u32,
    /// `(t, from, to)` for every mode change.
    pub transitions: Vec<(f64, Mode, Mode)>,
    pub events: Vec<(f64, GuardEvent)>,
}

impl RunSummary {
    /// First time the mode changed from `from` to `to`.
    pub fn transition_time(&self, from: Mode, to: Mode) -> Option<f64> {
        self.transitions.iter().find(|(_, a, b)| *a == from && *b == to).map(|(t, _, _)| *t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum LegPath {
    Quads { from: [Vec3; 2], to: [Vec3; 2] },
    Cable { from: (Vec3, f64), to: (Vec3, f64) },
}

#[derive(Debug, Clone, PartialEq)]
struct Leg {
    start: f64,
    duration: f64,
    path: LegPath,
}

#[derive(Debug, Clone, PartialEq)]
enum QuadPlan {
    Hold([Vec3; 2]),
    Approach { plan: ApproachPlan, legs: Vec<Leg> },
    Engage { start: f64, from: [Vec3; 2], to: [Vec3; 2] },
    /// References come from the action controllers.
    Placed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct RollTask {
    start: f64,
    edge: EdgeId,
    /// World yaw of the placement frame, frozen at the start of the roll.
    frame_yaw: f64,
    landed: bool,
    hold: [Vec3; 2],
}

/// Stepping simulator for one scenario.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: ScenarioConfig,
    trajectory: Trajectory,
    schedule: Option<ModeSchedule>,
    world: WorldConstants,
    dt: f64,
    step_index: usize,
    box_state: BoxState,
    quads: [QuadrotorState; 2],
    mode: Mode,
    guards: GuardMonitor,
    integral: IntegralState,
    floor: FloorMonitor,
    plan: QuadPlan,
    placement: Option<ContactPlacement>,
    action: ActionKind,
    gamma_override: Option<f64>,
    pull_yaw: f64,
    quad_yaw: f64,
    roll: Option<RollTask>,
    rolls_at_start: u32,
    task_done: bool,
    lift_off: bool,
    summary: RunSummary,
    tensions: [Vec3; 2],
}

fn quintic_between(from: &[Vec3; 2], to: &[Vec3; 2], tau: f64, duration: f64) -> [(Vec3, Vec3, Vec3); 2] {
    let (s, ds, dds) = quintic(tau.clamp(0.0, 1.0));
    let (ds, dds) = if (0.0..1.0).contains(&tau) { (ds, dds) } else { (0.0, 0.0) };
    std::array::from_fn(|i| {
        let d = to[i] - from[i];
        (from[i] + s * d, d * ds / duration, d * dds / (duration * duration))
    })
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self, SimError> {
        config.validate()?;
        let trajectory = config.trajectory()?;
        let schedule = config.schedule();
        let world = WorldConstants { g: config.sim.gravity };
        let [x, y, yaw] = config.sim.box_start;
        let box_state = BoxState::resting(&config.box_params, x, y, yaw);
        let hover = |p: Vec3| RigidState::at_rest(p, Rotation::from_yaw(yaw));
        let mode = schedule.as_ref().map_or(config.sim.start_mode, |s| s.mode_at(0.0, config.sim.dt));
        let mut sim = Self {
            dt: config.sim.dt,
            floor: FloorMonitor::new(config.sim.floor_timeout),
            trajectory,
            schedule,
            world,
            step_index: 0,
            box_state,
            quads: [hover(Vec3::zeros()); 2],
            mode,
            guards: GuardMonitor::new(),
            integral: IntegralState::default(),
            plan: QuadPlan::Hold([Vec3::zeros(); 2]),
            placement: None,
            action: ActionKind::Drag,
            gamma_override: None,
            pull_yaw: yaw,
            quad_yaw: yaw,
            roll: None,
            rolls_at_start: 0,
            task_done: false,
            lift_off: false,
            summary: RunSummary::default(),
            tensions: [Vec3::zeros(); 2],
            config,
        };
        match mode {
            Mode::FreeCatenary | Mode::InitialContact => {
                sim.start_approach(0.0)?;
                if let QuadPlan::Approach { plan, .. } = &sim.plan {
                    let w = plan.waypoints[0];
                    let start = plan.quads_for(&w.lowest, w.span);
                    sim.quads = start.map(hover);
                    sim.start_approach(0.0)?;
                }
            }
            Mode::Action(action) => {
                sim.action = action;
                sim.placement = Some(sim.plan_for(action, 0.0)?);
                sim.quads = sim.placement_quads().map(hover);
                sim.enter(mode, 0.0)?;
                if action == ActionKind::Drag && sim.schedule.is_none() {
                    sim.start_on_reference();
                }
            }
        }
        sim.guards = GuardMonitor::primed(&sim.conditions());
        Ok(sim)
    }

    /// Puts the box and the quadrotors on the reference motion at t = 0,
    /// as if the drag were already under way.
    fn start_on_reference(&mut self) {
        let r = self.trajectory.reference(0.0);
        let body = &mut self.box_state.body;
        body.velocity = Vec3::new(r.velocity.x, r.velocity.y, 0.0);
        body.omega = body.rotation.transpose() * Vec3::new(0.0, 0.0, r.yaw_rate);
        let c = &self.config;
        let force = c.box_params.mass * r.acceleration
            + friction_feedforward(&r, &c.box_params, c.ground.mu_kinetic, &self.world);
        self.pull_yaw = pull_heading(&force, 0.0, self.pull_yaw);
        let placement = self.placement.expect("placement planned");
        let frame = FrameMotion { yaw: self.pull_yaw, rate: r.yaw_rate, accel: r.yaw_accel };
        let refs = quad_reference_from_box(&r, &placement, &frame, r.yaw, f64::NEG_INFINITY);
        for (q, reference) in self.quads.iter_mut().zip(&refs) {
            q.position = reference.position;
            q.velocity = reference.velocity;
        }
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.dt
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn box_state(&self) -> &BoxState {
        &self.box_state
    }

    pub fn quads(&self) -> &[QuadrotorState; 2] {
        &self.quads
    }

    pub fn placement(&self) -> Option<&ContactPlacement> {
        self.placement.as_ref()
    }

    pub fn summary(&self) -> &RunSummary {
        &self.summary
    }

    /// World-frame cable forces on the box during the last step.
    pub fn tensions(&self) -> &[Vec3; 2] {
        &self.tensions
    }

    /// Accumulated pivot rotation: quarter rolls completed plus the current angle.
    pub fn phi(&self) -> f64 {
        self.summary.completed_rolls as f64 * FRAC_PI_2 + self.box_state.pivot_angle()
    }

    fn min_altitude(&self) -> f64 {
        self.config.sim.floor_limit + self.config.planner.floor_margin
    }

    fn quad_positions(&self) -> [Vec3; 2] {
        self.quads.map(|q| q.position)
    }

    /// Placement for `action` on the face that leads the motion wanted at `t`.
    fn plan_for(&self, action: ActionKind, t: f64) -> Result<ContactPlacement, SimError> {
        let face_yaw = match self.placement {
            Some(p) if self.schedule.is_some() => p.face_yaw,
            _ => {
                let frame = self.box_state.frame_rotation();
                let heading = self
                    .trajectory
                    .motion_direction(t, &self.box_state.body.position, MOTION_HORIZON)
                    .unwrap_or_else(|| frame * Vec3::x());
                face_yaw_for(self.box_state.yaw(), heading.y.atan2(heading.x))
            }
        };
        let mut settings = self.config.planner;
        if let Some(g) = self.gamma_override {
            settings.gamma = g;
        }
        plan_placement(
            action,
            &self.box_state.half_extents(&self.config.box_params),
            self.config.cable.length,
            face_yaw,
            &settings,
            self.min_altitude(),
        )
        .map_err(|source| SimError::Planner { t, source })
    }

    fn placement_yaw(&self) -> f64 {
        wrap_angle(self.box_state.yaw() + self.placement.map_or(0.0, |p| p.face_yaw))
    }

    /// Taut quadrotor positions for the current placement on the actual box.
    fn placement_quads(&self) -> [Vec3; 2] {
        let p = self.placement.expect("placement planned");
        let frame = Rotation::from_yaw(self.placement_yaw());
        let base = self.box_state.body.position;
        p.quad_offsets().map(|q| base + frame * q)
    }

    fn contacts_world(&self) -> Option<[Vec3; 2]> {
        let p = self.placement?;
        Some(p.contacts_in_box().map(|c| contact_point_world(&c, &self.box_state)))
    }

    /// Next action from the planner, or from the schedule when one is set.
    fn next_action(&self, t: f64) -> ActionKind {
        if let Some(s) = &self.schedule {
            let upcoming = s.entries.iter().find_map(|(start, m)| match m {
                Mode::Action(a) if *start >= t - 0.5 * self.dt => Some(*a),
                _ => None,
            });
            if let Some(a) = upcoming {
                return a;
            }
        }
        choose_action(&self.config.box_params, &self.config.ground, self.config.planner.roll_height).action
    }

    fn start_approach(&mut self, t: f64) -> Result<(), SimError> {
        self.action = self.next_action(t);
        let placement = self.plan_for(self.action, t)?;
        self.placement = Some(placement);
        let plan = approach_waypoints(
            &placement,
            &self.box_state,
            &self.config.box_params,
            self.config.cable.length,
            self.config.sim.floor_limit,
        )
        .map_err(|source| SimError::Planner { t, source })?;
        let first = plan.waypoints[0];
        let target = plan.quads_for(&first.lowest, first.span);
        let now = self.quad_positions();
        let travel = (0..2).map(|i| (target[i] - now[i]).norm()).fold(0.0, f64::max);
        let mut legs = vec![Leg {
            start: t,
            duration: (travel / APPROACH_SPEED).max(1.0),
            path: LegPath::Quads { from: now, to: target },
        }];
        for pair in plan.waypoints.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let dist = (b.lowest - a.lowest).norm().max((b.span - a.span).abs());
            let last = legs.last().unwrap();
            legs.push(Leg {
                start: last.start + last.duration,
                duration: (dist / b.speed).max(0.5),
                path: LegPath::Cable { from: (a.lowest, a.span), to: (b.lowest, b.span) },
            });
        }
        self.quad_yaw = self.box_state.yaw();
        self.plan = QuadPlan::Approach { plan, legs };
        Ok(())
    }

    fn approach_positions(plan: &ApproachPlan, legs: &[Leg], t: f64) -> [Vec3; 2] {
        let first = &legs[0];
        if t <= first.start {
            if let LegPath::Quads { from, .. } = first.path {
                return from;
            }
        }
        for leg in legs {
            let tau = (t - leg.start) / leg.duration;
            if tau <= 1.0 {
                let (s, _, _) = quintic(tau.clamp(0.0, 1.0));
                return match leg.path {
                    LegPath::Quads { from, to } => std::array::from_fn(|i| from[i] + s * (to[i] - from[i])),
                    LegPath::Cable { from, to } => {
                        plan.quads_for(&(from.0 + s * (to.0 - from.0)), from.1 + s * (to.1 - from.1))
                    }
                };
            }
        }
        let last = legs.last().unwrap();
        let end = last.start + last.duration;
        let w = plan.waypoints.last().unwrap();
        let lowest = w.lowest + plan.creep_speed * (t - end) * plan.direction;
        plan.quads_for(&lowest, w.span)
    }

    fn approach_end(legs: &[Leg]) -> f64 {
        let last = legs.last().unwrap();
        last.start + last.duration
    }

    fn begin_engage(&mut self, t: f64) {
        self.plan = QuadPlan::Engage { start: t, from: self.quad_positions(), to: self.placement_quads() };
    }

    /// Mode entry actions.
    fn enter(&mut self, mode: Mode, t: f64) -> Result<(), SimError> {
        match mode {
            Mode::FreeCatenary => {
                self.roll = None;
                self.integral.reset();
                if self.task_done {
                    self.plan = QuadPlan::Hold(self.quad_positions());
                } else {
                    self.start_approach(t)?;
                }
            }
            Mode::InitialContact => self.begin_engage(t),
            Mode::Action(ActionKind::Drag) => {
                if self.placement.is_none_or(|p| p.action != ActionKind::Drag) {
                    self.placement = Some(self.plan_for(ActionKind::Drag, t)?);
                }
                self.integral.reset();
                self.pull_yaw = self.placement_yaw();
                self.plan = QuadPlan::Placed;
            }
            Mode::Action(ActionKind::Roll) => {
                if self.placement.is_none_or(|p| p.action != ActionKind::Roll) {
                    self.placement = Some(self.plan_for(ActionKind::Roll, t)?);
                }
                let frame_yaw = self.placement_yaw();
                let direction = Rotation::from_yaw(frame_yaw) * Vec3::x();
                self.roll = Some(RollTask {
                    start: t,
                    edge: EdgeId::facing(&self.box_state.frame_rotation(), &direction),
                    frame_yaw,
                    landed: false,
                    hold: self.quad_positions(),
                });
                self.rolls_at_start = self.summary.completed_rolls;
                self.quad_yaw = self.box_state.yaw();
                self.plan = QuadPlan::Placed;
            }
        }
        Ok(())
    }

    fn switch(&mut self, to: Mode, t: f64) -> Result<(), SimError> {
        self.summary.transitions.push((t, self.mode, to));
        let from = self.mode;
        self.mode = to;
        if let Mode::Action(kind) = from {
            if to == Mode::FreeCatenary && self.schedule.is_none() {
                match kind {
                    ActionKind::Drag => self.task_done |= self.drag_complete(),
                    ActionKind::Roll => {
                        self.task_done |= self.summary.completed_rolls >= self.config.planner.quarter_rolls
                    }
                }
            }
        }
        self.enter(to, t)
    }

    fn drag_complete(&self) -> bool {
        let end = self.trajectory.end_reference();
        let d = (self.box_state.body.position - end.position).xy().norm();
        d < COMPLETE_DISTANCE && wrap_angle(self.box_state.yaw() - end.yaw).abs() < COMPLETE_YAW
    }

    /// Contact counts only once the cable is advancing from the standoff
    /// point, so a cable still resting on the box after a slip is ignored.
    fn contact_condition(&self) -> bool {
        let advancing = match &self.plan {
            QuadPlan::Approach { legs, .. } => self.time() >= legs.last().unwrap().start,
            _ => false,
        };
        if self.mode != Mode::FreeCatenary || self.task_done || !advancing {
            return false;
        }
        let q = self.quad_positions();
        match solve_catenary(q, self.config.cable.length) {
            Ok(shape) => !detect_contact(&shape, &self.box_state, &self.config.box_params).is_empty(),
            Err(_) => false,
        }
    }

    fn largest_elevation(&self, contacts: &[Vec3; 2]) -> f64 {
        let q = self.quad_positions();
        let pull = Rotation::from_yaw(self.placement_yaw()) * Vec3::x();
        (0..2).map(|i| ContactAngles::measure(&contacts[i], &q[i], &pull, None).gamma).fold(f64::MIN, f64::max)
    }

    fn conditions(&self) -> GuardConditions {
        let mut c = GuardConditions { contact: self.contact_condition(), lift_off: self.lift_off, ..Default::default() };
        let gamma_max = self.config.cable.friction.gamma_max;
        match (self.mode, self.contacts_world()) {
            (Mode::InitialContact, Some(cw)) => {
                c.taut = detect_taut(&self.quad_positions(), &cw, self.config.cable.length);
                c.slip = c.taut && self.largest_elevation(&cw) > gamma_max;
            }
            (Mode::Action(kind), Some(cw)) => {
                c.slip = self.largest_elevation(&cw) > gamma_max;
                c.complete = match kind {
                    ActionKind::Drag => self.drag_complete(),
                    ActionKind::Roll => self.roll.is_some_and(|r| r.landed),
                };
            }
            _ => {}
        }
        c
    }

    fn update_mode(&mut self, t: f64) -> Result<(), SimError> {
        if let Some(schedule) = &self.schedule {
            let wanted = schedule.mode_at(t, self.dt);
            if wanted != self.mode {
                self.switch(wanted, t)?;
            }
            self.lift_off = false;
            return Ok(());
        }
        let conditions = self.conditions();
        self.lift_off = false;
        if let Some(event) = self.guards.emit(self.mode, &conditions) {
            self.summary.events.push((t, event));
            let next = step_mode(self.mode, event, self.action).expect("monitor emits valid events");
            if event == GuardEvent::SlipDetected {
                self.gamma_override = Some(self.config.planner.gamma.min(SLIP_REPLAN_GAMMA));
            }
            self.switch(next, t)?;
        }
        Ok(())
    }

    /// Free-phase references; may advance the plan from approach to engage.
    fn free_references(&mut self, t: f64) -> [QuadReference; 2] {
        let yaw = self.quad_yaw;
        if let QuadPlan::Approach { plan, legs } = &self.plan {
            if self.schedule.is_some() && t >= Self::approach_end(legs) {
                self.begin_engage(t);
            } else {
                let at = |s: f64| Self::approach_positions(plan, legs, s);
                let (p, ahead, behind) = (at(t), at(t + FD_STEP), at(t - FD_STEP));
                return std::array::from_fn(|i| QuadReference {
                    position: p[i],
                    velocity: (ahead[i] - behind[i]) / (2.0 * FD_STEP),
                    acceleration: (ahead[i] - 2.0 * p[i] + behind[i]) / (FD_STEP * FD_STEP),
                    yaw,
                    clamped: false,
                });
            }
        }
        match &self.plan {
            QuadPlan::Engage { start, from, to } => {
                let tau = (t - start) / ENGAGE_TIME;
                if tau >= 1.0 && self.schedule.is_some() {
                    let to = *to;
                    self.plan = QuadPlan::Hold(to);
                    return to.map(|p| QuadReference::hold(p, yaw));
                }
                quintic_between(from, to, tau, ENGAGE_TIME).map(|(p, v, a)| QuadReference {
                    position: p,
                    velocity: v,
                    acceleration: a,
                    yaw,
                    clamped: false,
                })
            }
            QuadPlan::Hold(p) => p.map(|p| QuadReference::hold(p, yaw)),
            _ => self.quad_positions().map(|p| QuadReference::hold(p, yaw)),
        }
    }

    /// Tensions realising the planar part of `force`, with bookkeeping.
    fn realise(&mut self, force: &Vec3, contacts: &[ContactPoint; 2]) -> [Vec3; 2] {
        let q = self.quad_positions();
        match tension_from_box_wrench(force, &self.box_state, contacts, &q) {
            Ok(t) => {
                self.summary.taut_steps += 1;
                let err = ((t[0] + t[1]).xy() - force.xy()).norm();
                self.summary.max_backsub_error = self.summary.max_backsub_error.max(err);
                t
            }
            Err(_) => {
                self.summary.infeasible_steps += 1;
                tension_nonnegative(force, &self.box_state, contacts, &q)
            }
        }
    }

    fn drag_controls(&mut self, reference: &BoxReference) -> ([QuadReference; 2], [Vec3; 2]) {
        let c = &self.config;
        let placement = self.placement.expect("drag placement");
        let (pid, integral) = box_wrench_pid(reference, &self.box_state, &c.box_params, &c.gains, self.dt, &self.integral);
        self.integral = integral;
        let mut force = pid + friction_feedforward(reference, &c.box_params, c.ground.mu_kinetic, &self.world);
        force.z = 0.0;
        let (psi, correction) = yaw_command(reference, &self.box_state, &c.gains);
        // cables only pull away from the face they hold: a demand into the
        // face keeps the last heading, others stay inside the face cone
        let face = self.placement_yaw();
        let normal = Vec3::new(face.cos(), face.sin(), 0.0);
        if force.dot(&normal) > 0.0 {
            let limit = FRAC_PI_2 - placement.alpha;
            let offset = wrap_angle(pull_heading(&force, correction, self.pull_yaw) - face);
            self.pull_yaw = wrap_angle(face + offset.clamp(-limit, limit));
        }
        self.quad_yaw = psi;
        let frame = FrameMotion { yaw: self.pull_yaw, rate: reference.yaw_rate, accel: reference.yaw_accel };
        let refs = quad_reference_from_box(reference, &placement, &frame, psi, self.min_altitude());
        let contacts = placement.contacts_in_box();
        // keep the cables from lifting the box: scale the demand, then solve
        let q = self.quad_positions();
        let probe = tension_from_box_wrench(&force, &self.box_state, &contacts, &q)
            .unwrap_or_else(|_| tension_nonnegative(&force, &self.box_state, &contacts, &q));
        let lift = probe[0].z + probe[1].z;
        let cap = LIFT_SHARE * c.box_params.mass * self.world.g;
        if lift > cap {
            force *= cap / lift;
        }
        let tensions = self.realise(&force, &contacts);
        (refs, tensions)
    }

    fn roll_controls(&mut self, t: f64) -> Result<([QuadReference; 2], [Vec3; 2]), SimError> {
        let task = self.roll.expect("roll task");
        let yaw = self.quad_yaw;
        if task.landed {
            return Ok((task.hold.map(|p| QuadReference::hold(p, yaw)), [Vec3::zeros(); 2]));
        }
        let c = &self.config;
        let placement = self.placement.expect("roll placement");
        let contacts = placement.contacts_in_box();
        let duration = c.planner.roll_duration;
        let tau = ((t - task.start) / duration).clamp(0.0, 1.0);
        let (s, ds, dds) = quintic(tau);
        let (ds, dds) = if tau < 1.0 { (ds, dds) } else { (0.0, 0.0) };
        let reference = RollReference {
            angle: FRAC_PI_2 * s,
            rate: FRAC_PI_2 * ds / duration,
            accel: FRAC_PI_2 * dds / (duration * duration),
        };
        let q = self.quad_positions();
        let force = match roll_force_command(
            &self.box_state,
            &c.box_params,
            &self.world,
            &c.gains,
            &reference,
            task.edge,
            &contacts,
            &q,
        ) {
            Ok(f) => f,
            Err(ControlError::NoRollAuthority) => {
                self.summary.no_authority_steps += 1;
                Vec3::zeros()
            }
            Err(source) => return Err(SimError::Control { t, source }),
        };
        let pivot = match self.box_state.support {
            Support::PivotingOnEdge(p) => p,
            Support::FlatOnGround => {
                match begin_pivot(&self.box_state, &c.box_params, task.edge).support {
                    Support::PivotingOnEdge(p) => p,
                    Support::FlatOnGround => unreachable!(),
                }
            }
        };
        let omega = pivot.axis * pivot.rate;
        let alpha = pivot.axis * reference.accel;
        let moving: [(Vec3, Vec3, Vec3); 2] = std::array::from_fn(|i| {
            let p = contact_point_world(&contacts[i], &self.box_state);
            let r = p - pivot.edge_point;
            (p, omega.cross(&r), alpha.cross(&r) + omega.cross(&omega.cross(&r)))
        });
        let turn = Rotation::from_yaw(task.frame_yaw);
        let directions = [turn * placement.cable_direction(0), turn * placement.cable_direction(1)];
        let refs = quads_from_contacts(&moving, &directions, placement.free_length, yaw, self.min_altitude());
        let tensions = self.realise(&force, &contacts);
        Ok((refs, tensions))
    }

    fn check_finite(&self, t: f64) -> Result<(), SimError> {
        let b = &self.box_state.body;
        let mut values = vec![b.position, b.velocity, b.omega];
        for q in &self.quads {
            values.extend([q.position, q.velocity, q.omega]);
        }
        if values.iter().any(|v| v.iter().any(|x| !x.is_finite() || x.abs() > DIVERGENCE_LIMIT)) {
            return Err(SimError::SimulationDiverged { t });
        }
        Ok(())
    }

    /// Advances one step. Returns the record of the state at the start of
    /// the step together with the controls applied during it.
    pub fn step(&mut self) -> Result<LogRecord, SimError> {
        let t = self.time();
        self.update_mode(t)?;
        let reference = self.trajectory.reference(t);

        let (refs, tensions) = match self.mode {
            Mode::FreeCatenary | Mode::InitialContact => (self.free_references(t), [Vec3::zeros(); 2]),
            Mode::Action(ActionKind::Drag) => self.drag_controls(&reference),
            Mode::Action(ActionKind::Roll) => self.roll_controls(t)?,
        };
        self.floor.update(&refs, self.dt).map_err(|source| SimError::Control { t, source })?;

        let record = self.record(t, &reference, &tensions);
        self.tensions = tensions;

        let contacts = self.placement.map(|p| p.contacts_in_box());
        let loads: Vec<AppliedForce> = match contacts {
            Some(cs) if tensions.iter().any(|f| f.norm() > 0.0) => {
                (0..2).map(|i| AppliedForce { point: cs[i].p, force: tensions[i] }).collect()
            }
            _ => Vec::new(),
        };
        let c = &self.config;
        let stepped = match step_box(&self.box_state, &c.box_params, &c.ground, &self.world, &loads, self.dt) {
            Ok(s) => s,
            Err(DynamicsError::NegativeNormal { .. }) => {
                self.lift_off = true;
                self.summary.lift_off_steps += 1;
                step_box(&self.box_state, &c.box_params, &c.ground, &self.world, &[], self.dt)
                    .map_err(|source| SimError::Dynamics { t, source })?
            }
            Err(source) => return Err(SimError::Dynamics { t, source }),
        };
        self.box_state = stepped.state;
        if stepped.event == Some(SupportEvent::Landed) {
            self.summary.completed_rolls += 1;
            if let Some(task) = self.roll.as_mut() {
                task.landed = true;
                task.hold = refs.map(|r| r.position);
            }
        }

        for i in 0..2 {
            let command = se3_controller(&self.quads[i], &refs[i], &c.quadrotor, &c.gains, &self.world, &tensions[i])
                .map_err(|source| SimError::Control { t, source })?;
            self.quads[i] = step_quadrotor(&self.quads[i], &c.quadrotor, &self.world, &command, &-tensions[i], self.dt);
        }
        self.step_index += 1;
        self.summary.steps = self.step_index;
        self.check_finite(self.time())?;
        Ok(record)
    }

    fn record(&self, t: f64, reference: &BoxReference, tensions: &[Vec3; 2]) -> LogRecord {
        let ref_phi = match self.roll {
            Some(task) if !task.landed => {
                let tau = ((t - task.start) / self.config.planner.roll_duration).clamp(0.0, 1.0);
                self.rolls_at_start as f64 * FRAC_PI_2 + FRAC_PI_2 * quintic(tau).0
            }
            _ => self.summary.completed_rolls as f64 * FRAC_PI_2,
        };
        let p = self.box_state.body.position;
        LogRecord {
            t,
            quads: self.quads.map(|q| [q.position.x, q.position.y, q.position.z]),
            box_position: [p.x, p.y, p.z],
            box_yaw: self.box_state.yaw(),
            box_phi: self.phi(),
            mode: self.mode,
            tensions: tensions.map(|f| f.norm()),
            reference: [reference.position.x, reference.position.y, reference.yaw, ref_phi],
        }
    }
}

/// Runs a scenario to its duration and writes the CSV log to `out`.
pub fn run_scenario<W: Write>(config: &ScenarioConfig, out: &mut W) -> Result<RunSummary, SimError> {
    let mut sim = Simulation::new(config.clone())?;
    write_preamble(out, &config.to_json())?;
    for _ in 0..config.steps() {
        sim.step()?.write_row(out)?;
    }
    Ok(sim.summary().clone())
}

/// Runs a scenario without logging.
pub fn simulate(config: &ScenarioConfig) -> Result<(Simulation, Vec<LogRecord>), SimError> {
    let mut sim = Simulation::new(config.clone())?;
    let mut records = Vec::with_capacity(config.steps());
    for _ in 0..config.steps() {
        records.push(sim.step()?);
    }
    Ok((sim, records))
}
