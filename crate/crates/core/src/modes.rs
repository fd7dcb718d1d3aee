//! Contact automaton: free catenary, initial contact, and action.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    Drag,
    Roll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    FreeCatenary,
    InitialContact,
    Action(ActionKind),
}

impl Mode {
    /// Name used in logs.
    pub fn label(self) -> &'static str {
        match self {
            Mode::FreeCatenary => "FREE",
            Mode::InitialContact => "CONTACT",
            Mode::Action(ActionKind::Drag) => "DRAG",
            Mode::Action(ActionKind::Roll) => "ROLL",
        }
    }

    pub fn from_label(label: &str) -> Option<Mode> {
        Some(match label {
            "FREE" => Mode::FreeCatenary,
            "CONTACT" => Mode::InitialContact,
            "DRAG" => Mode::Action(ActionKind::Drag),
            "ROLL" => Mode::Action(ActionKind::Roll),
            _ => return None,
        })
    }

    pub const ALL: [Mode; 4] = [
        Mode::FreeCatenary,
        Mode::InitialContact,
        Mode::Action(ActionKind::Drag),
        Mode::Action(ActionKind::Roll),
    ];
}

impl Serialize for Mode {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Mode {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let label = String::deserialize(deserializer)?;
        Mode::from_label(&label).ok_or_else(|| {
            serde::de::Error::custom(format!("unknown mode '{label}', expected FREE, CONTACT, DRAG or ROLL"))
        })
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GuardEvent {
    ContactMade,
    CableTaut,
    SlipDetected,
    ActionComplete,
    LiftOffDetected,
}

impl GuardEvent {
    /// Evaluation order outside the action mode.
    pub const ORDER: [GuardEvent; 5] = [
        GuardEvent::ContactMade,
        GuardEvent::CableTaut,
        GuardEvent::SlipDetected,
        GuardEvent::ActionComplete,
        GuardEvent::LiftOffDetected,
    ];

    /// Priority inside the action mode.
    pub const ACTION_PRIORITY: [GuardEvent; 3] =
        [GuardEvent::SlipDetected, GuardEvent::LiftOffDetected, GuardEvent::ActionComplete];

    fn index(self) -> usize {
        Self::ORDER.iter().position(|e| *e == self).unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no transition from {mode} on {event:?}")]
pub struct InvalidTransition {
    pub mode: Mode,
    pub event: GuardEvent,
}

/// Transition table. `action` is the planner's choice when entering the
/// action mode.
pub fn step_mode(current: Mode, event: GuardEvent, action: ActionKind) -> Result<Mode, InvalidTransition> {
    use GuardEvent::*;
    match (current, event) {
        (Mode::FreeCatenary, ContactMade) => Ok(Mode::InitialContact),
        (Mode::InitialContact, CableTaut) => Ok(Mode::Action(action)),
        (Mode::Action(_), SlipDetected | ActionComplete) => Ok(Mode::FreeCatenary),
        (_, LiftOffDetected) => Ok(Mode::FreeCatenary),
        (mode, event) => Err(InvalidTransition { mode, event }),
    }
}

/// Guard conditions sampled at one instant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GuardConditions {
    pub contact: bool,
    pub taut: bool,
    pub slip: bool,
    pub complete: bool,
    pub lift_off: bool,
}

impl GuardConditions {
    fn get(&self, event: GuardEvent) -> bool {
        match event {
            GuardEvent::ContactMade => self.contact,
            GuardEvent::CableTaut => self.taut,
            GuardEvent::SlipDetected => self.slip,
            GuardEvent::ActionComplete => self.complete,
            GuardEvent::LiftOffDetected => self.lift_off,
        }
    }
}

/// Turns condition levels into onset events.
///
/// A condition arms its event when it becomes true and disarms when it
/// turns false or its event is emitted, so each onset fires at most once.
/// An armed event that is not valid in the current mode stays armed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GuardMonitor {
    previous: [bool; 5],
    armed: [bool; 5],
}

impl GuardMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    /// Monitor that treats the given conditions as already seen.
    pub fn primed(conditions: &GuardConditions) -> Self {
        let previous = GuardEvent::ORDER.map(|e| conditions.get(e));
        Self { previous, armed: [false; 5] }
    }

    /// At most one event for this step.
    pub fn emit(&mut self, mode: Mode, conditions: &GuardConditions) -> Option<GuardEvent> {
        for event in GuardEvent::ORDER {
            let i = event.index();
            let now = conditions.get(event);
            if now && !self.previous[i] {
                self.armed[i] = true;
            }
            if !now {
                self.armed[i] = false;
            }
            self.previous[i] = now;
        }
        let candidates: &[GuardEvent] = match mode {
            Mode::Action(_) => &GuardEvent::ACTION_PRIORITY,
            _ => &GuardEvent::ORDER,
        };
        let fired = candidates
            .iter()
            .copied()
            .find(|e| self.armed[e.index()] && step_mode(mode, *e, ActionKind::Drag).is_ok())?;
        self.armed[fired.index()] = false;
        Some(fired)
    }
}

/// Supervisory timetable that forces modes at fixed times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSchedule {
    /// `(start time, mode)` pairs in increasing time order.
    pub entries: Vec<(f64, Mode)>,
}

impl ModeSchedule {
    pub fn new(mut entries: Vec<(f64, Mode)>) -> Result<Self, String> {
        if entries.is_empty() {
            return Err("schedule needs at least one entry".into());
        }
        if entries.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err("schedule times must increase".into());
        }
        if entries.iter().any(|(t, _)| !t.is_finite() || *t < 0.0) {
            return Err("schedule times must be finite and non-negative".into());
        }
        entries.shrink_to_fit();
        Ok(Self { entries })
    }

    /// Mode in force at `t`. Switch times are matched to within half a step
    /// so a switch lands on the nearest grid point.
    pub fn mode_at(&self, t: f64, dt: f64) -> Mode {
        let mut mode = self.entries[0].1;
        for (start, m) in &self.entries {
            if t >= start - 0.5 * dt {
                mode = *m;
            }
        }
        mode
    }
}
