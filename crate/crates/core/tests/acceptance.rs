//! End-to-end acceptance checks. Runs without the libtest harness so the
//! PASS/FAIL line of each criterion is always printed; exits non-zero if
//! any criterion fails.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::time::Instant;

use catenary_core::control::{se3_controller, Gains, QuadReference};
use catenary_core::dynamics::{
    rk4_step, step_box, step_quadrotor, AppliedForce, BoxParams, BoxState, GroundModel, QuadrotorParams, RigidState,
    SupportEvent,
};
use catenary_core::geometry::solve_catenary;
use catenary_core::modes::{ActionKind, GuardEvent, Mode};
use catenary_core::scenario::{builtin_scenario, run_scenario, simulate, Metrics, ScenarioConfig, BUILTIN_SCENARIOS};
use catenary_core::{Rotation, Vec3, WorldConstants};
use nalgebra::Vector2;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = fn() -> Outcome;

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Arc length by 5-point Gauss-Legendre on `sqrt(1 + z'(u)^2)`.
fn quadrature_length(shape: &catenary_core::geometry::CatenaryShape) -> f64 {
    const NODES: [f64; 5] = [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let panels = 200;
    let h = shape.span / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let mid = (k as f64 + 0.5) * h;
        for (x, w) in NODES.iter().zip(WEIGHTS) {
            let s = shape.slope_at(mid + 0.5 * h * x);
            total += 0.5 * h * w * (1.0 + s * s).sqrt();
        }
    }
    total
}

fn catenary_suite() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x0c47_e4a7);
    let configs: Vec<([Vec3; 2], f64)> = (0..1000)
        .map(|_| {
            let p1 = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.2..1.5));
            let heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let span: f64 = rng.random_range(0.05..1.5);
            let p2 = p1 + Vec3::new(span * heading.cos(), span * heading.sin(), rng.random_range(-0.5..0.5));
            let chord = (p2 - p1).norm();
            (([p1, p2]), chord * rng.random_range(1.01..2.5) + 0.01)
        })
        .collect();
    let start = Instant::now();
    let shapes: Vec<_> = configs.iter().map(|(e, l)| solve_catenary(*e, *l)).collect();
    let elapsed = start.elapsed().as_secs_f64();
    let mut worst = 0.0f64;
    let mut failures = 0;
    for ((ends, length), shape) in configs.iter().zip(&shapes) {
        match shape {
            Ok(s) => {
                let end_gap = (s.point_at_horizontal(s.span) - ends[1]).norm();
                worst = worst.max((quadrature_length(s) - length).abs()).max(end_gap);
            }
            Err(_) => failures += 1,
        }
    }
    outcome(
        failures == 0 && worst <= 1e-8 && elapsed < 1.0,
        format!("1000 configs, worst arc/endpoint error {worst:.2e} m (tol 1e-8), {failures} solver errors, {elapsed:.4} s (< 1 s)"),
    )
}

fn oscillator_error(dt: f64) -> f64 {
    let steps = (1.0 / dt).round() as usize;
    let mut s = Vector2::new(1.0, 0.0);
    for _ in 0..steps {
        s = rk4_step(&s, dt, |s| Vector2::new(s[1], -s[0]));
    }
    (s - Vector2::new(1.0f64.cos(), -1.0f64.sin())).norm()
}

fn integrator_order() -> Outcome {
    let dts = [0.1, 0.05, 0.025, 0.0125];
    let errors: Vec<f64> = dts.iter().map(|&dt| oscillator_error(dt)).collect();
    let order = errors.windows(2).map(|e| (e[0] / e[1]).log2()).fold(f64::INFINITY, f64::min);
    outcome(order >= 3.9, format!("worst observed order {order:.3} over dt 0.1..0.0125 (>= 3.9)"))
}

fn hover_regulation() -> Outcome {
    let params = QuadrotorParams::default();
    let world = WorldConstants::default();
    let gains = Gains::default();
    let target = QuadReference::hold(Vec3::new(0.0, 0.0, 1.0), 0.0);
    let dt = 1e-3;
    let offsets = [Vec3::new(0.05, 0.0, 0.0), Vec3::new(0.0, -0.05, 0.0), Vec3::new(0.0, 0.0, 0.05), Vec3::new(0.03, 0.03, -0.02)];
    let mut worst_settle = 0.0f64;
    let mut all = true;
    for offset in offsets {
        let mut s = RigidState::at_rest(target.position + offset.normalize() * 0.05, Rotation::identity());
        let mut settled_at = None;
        for k in 1..=5000 {
            let c = se3_controller(&s, &target, &params, &gains, &world, &Vec3::zeros()).expect("hover command");
            s = step_quadrotor(&s, &params, &world, &c, &Vec3::zeros(), dt);
            let err = (s.position - target.position).norm();
            if err < 1e-3 {
                settled_at.get_or_insert(k as f64 * dt);
            } else {
                settled_at = None;
            }
        }
        match settled_at {
            Some(t) => worst_settle = worst_settle.max(t),
            None => all = false,
        }
    }
    outcome(all, format!("4 offset directions of 5 cm, slowest entry into the 1 mm ball {worst_settle:.3} s (< 5 s)"))
}

fn rolling_line() -> Outcome {
    let config = builtin_scenario("rolling_line").unwrap();
    let start = Instant::now();
    let (sim, records) = simulate(&config).expect("rolling_line runs");
    let wall = start.elapsed().as_secs_f64();
    let first = records.first().unwrap().box_position;
    let last = records.last().unwrap().box_position;
    let displacement = last[0] - first[0];
    let phi = sim.phi();
    let rolls = sim.summary().completed_rolls;
    let pass = rolls == 1 && (displacement - 0.155).abs() <= 0.005 && (phi - FRAC_PI_2).abs() <= 0.02 && wall < 10.0;
    outcome(
        pass,
        format!(
            "{rolls} quarter roll, displacement {displacement:.4} m (0.155 +- 0.005), phi {phi:.4} rad (pi/2 +- 0.02), wall {wall:.2} s (< 10 s)"
        ),
    )
}

fn dragging_semicircle() -> Outcome {
    let config = builtin_scenario("dragging_semicircle").unwrap();
    let (_, records) = simulate(&config).expect("dragging_semicircle runs");
    let m = Metrics::compute(&records, 2.0);
    outcome(
        m.rms_planar < 0.06 && m.rms_yaw < 0.15,
        format!("planar RMS {:.4} m (< 0.06), yaw RMS {:.4} rad (< 0.15) over t >= 2 s", m.rms_planar, m.rms_yaw),
    )
}

fn drag_then_roll() -> Outcome {
    let config = builtin_scenario("drag_then_roll").unwrap();
    let dt = config.sim.dt;
    let (sim, _) = simulate(&config).expect("drag_then_roll runs");
    let s = sim.summary();
    let drag = s.transition_time(Mode::FreeCatenary, Mode::Action(ActionKind::Drag));
    let roll = s.transition_time(Mode::Action(ActionKind::Drag), Mode::Action(ActionKind::Roll));
    let near = |t: Option<f64>, target: f64| t.is_some_and(|t| (t - target).abs() <= dt + 1e-12);
    outcome(
        near(drag, 11.0) && near(roll, 16.5),
        format!("FREE->DRAG at {drag:?} s (11 +- {dt}), DRAG->ROLL at {roll:?} s (16.5 +- {dt})"),
    )
}

/// Quasi-static answer for a horizontal pull at `height` on a box at rest.
fn quasi_static_tips(params: &BoxParams, mu: f64, height: f64) -> bool {
    mu > 0.5 * params.width / height
}

/// Ramps a horizontal pull on the rear face and reports whether the box
/// tips before it starts sliding.
fn simulated_tips(params: &BoxParams, mu: f64, height: f64) -> Option<bool> {
    let world = WorldConstants::default();
    let ground = GroundModel::new(mu, mu).unwrap();
    let h = params.half_extents();
    let point = Vec3::new(-h.x, 0.0, height - h.z);
    let weight = params.mass * world.g;
    let dt = 1e-3;
    let mut state = BoxState::resting(params, 0.0, 0.0, 0.0);
    for k in 1..=4000 {
        // 0.5 m g per second, past any threshold in the sweep
        let force = Vec3::new(0.5 * weight * k as f64 * dt, 0.0, 0.0);
        let step = step_box(&state, params, &ground, &world, &[AppliedForce { point, force }], dt).ok()?;
        if matches!(step.event, Some(SupportEvent::Tipped(_))) {
            return Some(true);
        }
        state = step.state;
        if state.body.position.x > 1e-6 {
            return Some(false);
        }
    }
    None
}

fn tip_versus_slide() -> Outcome {
    let params = BoxParams::default();
    let height = 0.12;
    let mu_star = 0.5 * params.width / height;
    let mut checked = 0;
    let mut disagreements = Vec::new();
    for k in 0..=18 {
        let mu = 0.10 + 0.05 * k as f64;
        if (mu - mu_star).abs() <= 0.05 {
            continue;
        }
        checked += 1;
        let oracle = quasi_static_tips(&params, mu, height);
        if simulated_tips(&params, mu, height) != Some(oracle) {
            disagreements.push(format!("{mu:.2}"));
        }
    }
    outcome(
        disagreements.is_empty(),
        format!(
            "mu_star {mu_star:.4}, {checked} friction values, {} disagreements {:?} (100% agreement)",
            disagreements.len(),
            disagreements
        ),
    )
}

fn back_substitution() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for name in ["rolling_line", "dragging_semicircle", "drag_then_roll"] {
        let (sim, _) = simulate(&builtin_scenario(name).unwrap()).expect("scenario runs");
        let s = sim.summary();
        pass &= s.taut_steps > 0 && s.max_backsub_error <= 1e-9;
        details.push(format!(
            "{name}: {} taut steps, max {:.1e} N, {} slack-end steps",
            s.taut_steps, s.max_backsub_error, s.infeasible_steps
        ));
    }
    outcome(pass, format!("{} (tol 1e-9 N)", details.join("; ")))
}

fn slip_recovery() -> Outcome {
    let mut config = builtin_scenario("rolling_line").unwrap();
    config.planner.gamma = FRAC_PI_4;
    config.sim.duration = 60.0;
    let (sim, _) = simulate(&config).expect("slip scenario runs");
    let s = sim.summary();
    let slip = s.events.iter().find(|(_, e)| *e == GuardEvent::SlipDetected).map(|(t, _)| *t);
    let released = slip.and_then(|ts| {
        s.transitions.iter().find(|(t, from, to)| *t >= ts && *from == Mode::Action(ActionKind::Roll) && *to == Mode::FreeCatenary)
    });
    let reapproach = released.and_then(|(tr, _, _)| {
        s.transitions.iter().find(|(t, from, _)| *t > *tr && *from == Mode::FreeCatenary).map(|(t, _, _)| *t)
    });
    let done = reapproach.and_then(|ta| {
        s.events.iter().find(|(t, e)| *t > ta && *e == GuardEvent::ActionComplete).map(|(t, _)| *t)
    });
    let pass = slip.is_some() && released.is_some() && done.is_some_and(|t| t <= 60.0) && s.completed_rolls >= 1;
    outcome(
        pass,
        format!(
            "slip at {slip:?} s, released to FREE at {:?} s, re-approach at {reapproach:?} s, roll complete at {done:?} s (<= 60 s)",
            released.map(|r| r.0)
        ),
    )
}

fn render(config: &ScenarioConfig) -> Vec<u8> {
    let mut out = Vec::new();
    run_scenario(config, &mut out).expect("scenario runs");
    out
}

fn determinism() -> Outcome {
    let mut mismatched = Vec::new();
    for (name, _) in BUILTIN_SCENARIOS {
        let config = builtin_scenario(name).unwrap();
        if render(&config) != render(&config) {
            mismatched.push(name);
        }
    }
    outcome(
        mismatched.is_empty(),
        format!("{} builtin scenarios run twice, mismatched {:?}", BUILTIN_SCENARIOS.len(), mismatched),
    )
}

fn main() -> std::process::ExitCode {
    let criteria: [(&str, Check); 10] = [
        ("catenary oracle suite", catenary_suite),
        ("RK4 convergence order", integrator_order),
        ("hover regulation", hover_regulation),
        ("rolling_line", rolling_line),
        ("dragging_semicircle", dragging_semicircle),
        ("drag_then_roll timing", drag_then_roll),
        ("tip versus slide sweep", tip_versus_slide),
        ("tension back-substitution", back_substitution),
        ("slip recovery", slip_recovery),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (k, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {verdict}: {name}: {}", k + 1, o.detail);
        if !o.pass {
            failed.push(k + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", criteria.len());
        std::process::ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::ExitCode::FAILURE
    }
}
