//! A small latched-door world. Three door types look identical until the
//! panel moves; the knob must be twisted past the latch before any opening.
//!
//! Conventions (raw units): the hand lives in `[-1, 1]²`, push opens along
//! `+x`, pull along `-x`, slide along `+y`. The knob sits at
//! `(KNOB_X + offset, KNOB_Y)` and travels with the panel as it opens.

mod demo;
mod episode;

pub use demo::{generate_dataset, generate_demonstration, Demonstration, DEMO_LENGTH, DEMO_START};
pub use episode::{
    run_episode, success_csv, success_table, EpisodeLog, EpisodeOptions, EpisodeSummary, InterferenceSchedule, ModelPolicy, Policy, PolicyStep,
    ReplayPolicy, ScriptedPolicy, StepRecord, SuccessRow, TrialSetup,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const KNOB_X: f64 = 0.3;
pub const KNOB_Y: f64 = 0.0;
pub const GRASP_RADIUS: f64 = 0.1;
pub const LATCH_THRESHOLD: f64 = 0.8;
pub const OPENING_GAIN: f64 = 2.0;
pub const HAND_CAP: f64 = 0.1;
pub const WRIST_CAP: f64 = 0.2;
pub const MAX_OFFSET: f64 = 0.05;
pub const SUCCESS_THRESHOLD: f64 = 0.6;
pub const DEFAULT_MAX_STEPS: usize = 200;

pub const JOINT_DIM: usize = 4;
pub const FEAT_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoorType {
    Push,
    Pull,
    Slide,
}

impl DoorType {
    pub const ALL: [DoorType; 3] = [DoorType::Push, DoorType::Pull, DoorType::Slide];

    pub fn opening_axis(self) -> [f64; 2] {
        match self {
            DoorType::Push => [1.0, 0.0],
            DoorType::Pull => [-1.0, 0.0],
            DoorType::Slide => [0.0, 1.0],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DoorType::Push => "push",
            DoorType::Pull => "pull",
            DoorType::Slide => "slide",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for DoorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DoorType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "push" => Ok(DoorType::Push),
            "pull" => Ok(DoorType::Pull),
            "slide" => Ok(DoorType::Slide),
            other => Err(Error::InvalidArgument(format!("unknown door type {other:?} (expected push, pull or slide)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub hand: [f64; 2],
    pub wrist: f64,
    pub grip: f64,
    pub knob_twist: f64,
    pub door_open: f64,
    pub door_type: DoorType,
    pub offset: f64,
    pub held: bool,
}

impl EnvState {
    pub fn new(door_type: DoorType, offset: f64, hand: [f64; 2]) -> Self {
        EnvState {
            hand: [hand[0].clamp(-1.0, 1.0), hand[1].clamp(-1.0, 1.0)],
            wrist: 0.0,
            grip: 0.0,
            knob_twist: 0.0,
            door_open: 0.0,
            door_type,
            offset: offset.clamp(-MAX_OFFSET, MAX_OFFSET),
            held: false,
        }
    }

    /// Current knob position; it rides along with the panel.
    pub fn knob(&self) -> [f64; 2] {
        let a = self.door_type.opening_axis();
        let travel = self.door_open / OPENING_GAIN;
        [KNOB_X + self.offset + a[0] * travel, KNOB_Y + a[1] * travel]
    }

    pub fn near_knob(&self) -> bool {
        let k = self.knob();
        (self.hand[0] - k[0]).hypot(self.hand[1] - k[1]) <= GRASP_RADIUS
    }

    pub fn grasping(&self) -> bool {
        self.grip > 0.5 && self.near_knob()
    }

    pub fn success(&self) -> bool {
        self.door_open >= SUCCESS_THRESHOLD
    }
}

// Targets within a hair of the cap count as reachable, so a command computed
// as `current + cap` lands exactly on itself.
const CAP_SLACK: f64 = 1.0 + 1e-9;

fn track(current: f64, target: f64, cap: f64) -> f64 {
    let delta = target - current;
    if delta.abs() <= cap * CAP_SLACK {
        target
    } else {
        current + cap.copysign(delta)
    }
}

/// Advances the world by one step. Commands are `(hand x, hand y, wrist, grip)`
/// targets and are clamped to their ranges.
pub fn env_step(state: &EnvState, command: &[f64; 4]) -> EnvState {
    let clean = |v: f64| if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 };
    let target = [clean(command[0]), clean(command[1])];
    let grasping = state.grasping();
    let latch_open = state.knob_twist >= LATCH_THRESHOLD;

    let mut next = *state;
    let (dx, dy) = (target[0] - state.hand[0], target[1] - state.hand[1]);
    let dist = dx.hypot(dy);
    next.hand = if dist <= HAND_CAP * CAP_SLACK {
        target
    } else {
        let s = HAND_CAP / dist;
        [state.hand[0] + dx * s, state.hand[1] + dy * s]
    };
    next.wrist = track(state.wrist, clean(command[2]), WRIST_CAP);
    next.grip = track(state.grip, clean(command[3]).max(0.0), WRIST_CAP);

    if grasping {
        next.knob_twist = track(state.knob_twist, next.wrist.abs(), WRIST_CAP).clamp(0.0, 1.0);
        if latch_open && !state.held {
            let a = state.door_type.opening_axis();
            let along = (next.hand[0] - state.hand[0]) * a[0] + (next.hand[1] - state.hand[1]) * a[1];
            next.door_open = (state.door_open + OPENING_GAIN * along.max(0.0)).min(1.0);
        }
    }
    next
}

/// Raw (unnormalized) observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// hand x, hand y, wrist, grip
    pub joint: [f64; JOINT_DIM],
    /// hand x, hand y, wrist, knob twist, panel dx, panel dy, opening, knob proximity
    pub feat: [f64; FEAT_DIM],
}

pub fn observe(state: &EnvState) -> Observation {
    let [x, y] = state.hand;
    let a = state.door_type.opening_axis();
    let d = state.door_open;
    Observation {
        joint: [x, y, state.wrist, state.grip],
        feat: [x, y, state.wrist, state.knob_twist, d * a[0], d * a[1], d, if state.near_knob() { 1.0 } else { 0.0 }],
    }
}

/// Raw bounds of every observation dimension, `(min, max)`.
pub fn joint_bounds() -> [(f64, f64); JOINT_DIM] {
    [(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0), (0.0, 1.0)]
}

pub fn feat_bounds() -> [(f64, f64); FEAT_DIM] {
    [(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0), (0.0, 1.0), (-1.0, 1.0), (-1.0, 1.0), (0.0, 1.0), (0.0, 1.0)]
}
