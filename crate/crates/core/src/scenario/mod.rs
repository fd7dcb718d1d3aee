//! Scenario configuration, reference trajectories, run logs and the
//! closed-loop driver.

mod config;
mod driver;
mod log;
mod trajectory;

pub use config::{
    builtin_scenario, load_config, resolve_scenario, CableConfig, ConfigError, ScenarioConfig, SimSettings,
    BUILTIN_SCENARIOS, MAX_DT,
};
pub use log::{read_log, write_preamble, LogError, LogRecord, Metrics, HEADER};
pub use trajectory::{builtin_segments, quintic, Segment, Trajectory, TrajectorySpec, YawSpec, BUILTIN_TRAJECTORIES};
pub use driver::{
    run_scenario, simulate, RunSummary, SimError, Simulation, COMPLETE_DISTANCE, COMPLETE_YAW, DIVERGENCE_LIMIT,
    ENGAGE_TIME, LIFT_SHARE, SLIP_REPLAN_GAMMA,
};
