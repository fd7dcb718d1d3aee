//! Scenario configuration: JSON files, builtin scenarios, validation.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::cable::CableFriction;
use crate::control::Gains;
use crate::dynamics::{BoxParams, GroundModel, QuadrotorParams};
use crate::modes::{ActionKind, Mode, ModeSchedule};
use crate::planner::PlannerSettings;

use super::trajectory::{Trajectory, TrajectorySpec};

pub const MAX_DT: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("unknown scenario '{0}' (not a builtin name or an existing file)")]
    UnknownScenario(String),
}

impl From<serde_json::Error> for ConfigError {
    fn from(e: serde_json::Error) -> Self {
        ConfigError::Parse { line: e.line(), column: e.column(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CableConfig {
    /// Cable length (m).
    pub length: f64,
    pub friction: CableFriction,
}

impl Default for CableConfig {
    fn default() -> Self {
        Self { length: 1.0, friction: CableFriction::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSettings {
    /// Integration and control period (s).
    pub dt: f64,
    pub duration: f64,
    pub gravity: f64,
    /// Mode at t = 0.
    pub start_mode: Mode,
    /// Supervisory mode timetable; replaces the contact guards when set.
    pub schedule: Option<Vec<(f64, Mode)>>,
    /// Lowest allowed quadrotor altitude (m).
    pub floor_limit: f64,
    /// Longest time a quadrotor reference may sit on the floor limit (s).
    pub floor_timeout: Option<f64>,
    /// Initial box pose `[x, y, yaw]`.
    pub box_start: [f64; 3],
    pub output: Option<PathBuf>,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            duration: 10.0,
            gravity: 9.81,
            start_mode: Mode::FreeCatenary,
            schedule: None,
            floor_limit: 0.15,
            floor_timeout: None,
            box_start: [0.0; 3],
            output: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    #[serde(rename = "box", default)]
    pub box_params: BoxParams,
    #[serde(default)]
    pub ground: GroundModel,
    #[serde(default)]
    pub cable: CableConfig,
    #[serde(default)]
    pub quadrotor: QuadrotorParams,
    #[serde(default)]
    pub gains: Gains,
    #[serde(default)]
    pub planner: PlannerSettings,
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub sim: SimSettings,
}

pub const BUILTIN_SCENARIOS: [(&str, &str); 4] = [
    ("dragging_semicircle", "drag the box along x = sin t, y = cos t with radial heading"),
    ("rolling_line", "roll the box one quarter turn toward +x"),
    ("drag_then_roll", "timed free, drag and roll phases"),
    ("rolling_slip", "rolling_line with a steep cable that slips and is re-planned"),
];

pub fn builtin_scenario(name: &str) -> Option<ScenarioConfig> {
    let base = |trajectory: &str, mu: f64| ScenarioConfig {
        name: name.to_string(),
        box_params: BoxParams::default(),
        ground: GroundModel::new(mu, mu).unwrap(),
        cable: CableConfig::default(),
        quadrotor: QuadrotorParams::default(),
        gains: Gains::default(),
        planner: PlannerSettings::default(),
        trajectory: TrajectorySpec::Builtin(trajectory.to_string()),
        sim: SimSettings::default(),
    };
    let config = match name {
        "dragging_semicircle" => {
            let mut c = base("dragging_semicircle", 0.3);
            c.sim.duration = PI;
            c.sim.start_mode = Mode::Action(ActionKind::Drag);
            c.sim.box_start = [0.0, 1.0, FRAC_PI_2];
            c
        }
        "rolling_line" => {
            let mut c = base("rolling_line", 0.8);
            c.sim.duration = 12.0;
            c.sim.box_start = [0.0, 0.5, 0.0];
            c
        }
        "drag_then_roll" => {
            let mut c = base("drag_then_roll", 0.8);
            c.sim.duration = 20.0;
            c.sim.schedule = Some(vec![
                (0.0, Mode::FreeCatenary),
                (11.0, Mode::Action(ActionKind::Drag)),
                (16.5, Mode::Action(ActionKind::Roll)),
            ]);
            c
        }
        "rolling_slip" => {
            let mut c = base("rolling_line", 0.8);
            c.sim.duration = 60.0;
            c.sim.box_start = [0.0, 0.5, 0.0];
            c.planner.gamma = FRAC_PI_4;
            c
        }
        _ => return None,
    };
    Some(config)
}

/// Overlays `patch` onto `base`, recursing into objects.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl ScenarioConfig {
    /// Parses JSON text. An optional top-level `"base"` names a builtin
    /// scenario the rest of the document is laid over.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let mut value: Value = serde_json::from_str(text)?;
        let base = match value.as_object_mut().and_then(|o| o.remove("base")) {
            None => None,
            Some(Value::String(name)) => {
                Some(builtin_scenario(&name).ok_or_else(|| ConfigError::UnknownScenario(name.clone()))?)
            }
            Some(other) => return Err(ConfigError::Validation(format!("'base' must be a scenario name, got {other}"))),
        };
        let config: ScenarioConfig = match base {
            // parse the text itself so errors carry its line numbers
            None => serde_json::from_str(text)?,
            Some(base) => {
                let mut merged = serde_json::to_value(base).expect("serialisable");
                merge(&mut merged, value);
                serde_json::from_value(merged)?
            }
        };
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serialisable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError::Validation(m));
        let s = &self.sim;
        if !(s.dt > 0.0 && s.dt <= MAX_DT) {
            return fail(format!("sim.dt = {} must lie in (0, {MAX_DT}]", s.dt));
        }
        if !(s.duration >= 0.0 && s.duration.is_finite()) {
            return fail(format!("sim.duration = {} must be finite and non-negative", s.duration));
        }
        if !(s.gravity > 0.0 && s.gravity.is_finite()) {
            return fail(format!("sim.gravity = {} must be positive", s.gravity));
        }
        if !(s.floor_limit >= 0.0 && s.floor_limit.is_finite()) {
            return fail(format!("sim.floor_limit = {} must be non-negative", s.floor_limit));
        }
        if let Some(t) = s.floor_timeout {
            if !(t > 0.0) {
                return fail(format!("sim.floor_timeout = {t} must be positive"));
            }
        }
        if s.box_start.iter().any(|v| !v.is_finite()) {
            return fail("sim.box_start must be finite".into());
        }
        if s.start_mode == Mode::InitialContact {
            return fail("sim.start_mode cannot be CONTACT".into());
        }
        if let Some(entries) = &s.schedule {
            ModeSchedule::new(entries.clone()).map_err(|e| ConfigError::Validation(format!("sim.schedule: {e}")))?;
        }
        let wrap = self.box_params.width.max(self.box_params.length);
        if !(self.cable.length > wrap && self.cable.length.is_finite()) {
            return fail(format!("cable.length = {} must exceed the box width {wrap}", self.cable.length));
        }
        self.gains.validate().map_err(|e| ConfigError::Validation(format!("gains: {e}")))?;
        self.planner.validate().map_err(|e| ConfigError::Validation(format!("planner: {e}")))?;
        self.trajectory()?;
        Ok(())
    }

    pub fn trajectory(&self) -> Result<Trajectory, ConfigError> {
        Trajectory::new(&self.trajectory, 0.5 * self.box_params.height)
            .map_err(|e| ConfigError::Validation(format!("trajectory: {e}")))
    }

    pub fn schedule(&self) -> Option<ModeSchedule> {
        self.sim.schedule.clone().map(|e| ModeSchedule::new(e).expect("validated"))
    }

    /// Number of logged steps.
    pub fn steps(&self) -> usize {
        (self.sim.duration / self.sim.dt).round() as usize
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    ScenarioConfig::from_json(&text)
}

/// A builtin scenario name, or else a path to a config file.
pub fn resolve_scenario(name_or_path: &str) -> Result<ScenarioConfig, ConfigError> {
    if let Some(c) = builtin_scenario(name_or_path) {
        return Ok(c);
    }
    let path = Path::new(name_or_path);
    if path.exists() {
        load_config(path)
    } else {
        Err(ConfigError::UnknownScenario(name_or_path.to_string()))
    }
}
