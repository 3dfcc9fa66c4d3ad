use super::{env_step, observe, DoorType, EnvState, Observation, KNOB_X, KNOB_Y, LATCH_THRESHOLD, MAX_OFFSET};
use crate::error::{Error, Result};
use crate::numkernel::RngStream;
use crate::trainer::{Dataset, Normalizer, Trajectory};

pub const DEMO_LENGTH: usize = 150;
pub const DEMO_START: [f64; 2] = [-0.3, -0.3];
const JITTER_STD: f64 = 0.01;
const TWIST_TARGET: f64 = 0.9;
const TRAVEL: f64 = 0.45;
const DEMO_MIN_OPEN: f64 = 0.8;
// Demonstration speeds, well under the motion caps so that the motion spans
// most of the episode instead of a short burst followed by a long hold.
const APPROACH_SPEED: f64 = 0.025;
const GRIP_RATE: f64 = 0.1;
const TWIST_RATE: f64 = 0.05;
const OPEN_SPEED: f64 = 0.015;

/// A scripted demonstration: `states[t]` produced `observations[t]`, and
/// `commands[t]` takes `states[t]` to `states[t + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub door_type: DoorType,
    pub offset: f64,
    pub states: Vec<EnvState>,
    pub observations: Vec<Observation>,
    pub commands: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Approach,
    Grip,
    Twist,
    Open,
    Hold,
}

fn toward(from: [f64; 2], to: [f64; 2], speed: f64) -> [f64; 2] {
    let (dx, dy) = (to[0] - from[0], to[1] - from[1]);
    let d = dx.hypot(dy);
    if d <= speed {
        to
    } else {
        [from[0] + dx * speed / d, from[1] + dy * speed / d]
    }
}

fn capped(from: f64, to: f64, rate: f64) -> f64 {
    from + (to - from).clamp(-rate, rate)
}

/// Waypoint controller plus phase transitions. Each command stays within the
/// motion caps, so the hand lands exactly on it.
struct Script {
    phase: Phase,
    knob: [f64; 2],
    twist: f64,
    goal: [f64; 2],
}

impl Script {
    fn new(door: DoorType, offset: f64, rng: &mut RngStream, start_jitter: bool) -> Self {
        let mut j = || if start_jitter { JITTER_STD * rng.normal() } else { 0.0 };
        let knob = [KNOB_X + offset + j(), KNOB_Y + j()];
        let twist = (TWIST_TARGET + j()).min(1.0);
        let a = door.opening_axis();
        let travel = TRAVEL + j();
        let side = j();
        let goal = [knob[0] + a[0] * travel - a[1] * side, knob[1] + a[1] * travel + a[0] * side];
        Script { phase: Phase::Approach, knob, twist, goal }
    }

    fn command(&mut self, s: &EnvState) -> [f64; 4] {
        loop {
            let next = match self.phase {
                Phase::Approach if s.hand == self.knob => Phase::Grip,
                Phase::Grip if s.grip >= 1.0 => Phase::Twist,
                Phase::Twist if s.knob_twist >= LATCH_THRESHOLD => Phase::Open,
                Phase::Open if s.hand == self.goal => Phase::Hold,
                p => p,
            };
            if next == self.phase {
                break;
            }
            self.phase = next;
        }
        match self.phase {
            Phase::Approach => {
                let h = toward(s.hand, self.knob, APPROACH_SPEED);
                [h[0], h[1], 0.0, 0.0]
            }
            Phase::Grip => [s.hand[0], s.hand[1], s.wrist, capped(s.grip, 1.0, GRIP_RATE)],
            Phase::Twist => [s.hand[0], s.hand[1], capped(s.wrist, self.twist, TWIST_RATE), 1.0],
            Phase::Open => {
                let h = toward(s.hand, self.goal, OPEN_SPEED);
                [h[0], h[1], s.wrist, 1.0]
            }
            Phase::Hold => [s.hand[0], s.hand[1], s.wrist, s.grip],
        }
    }
}

/// Runs the scripted controller for [`DEMO_LENGTH`] steps from [`DEMO_START`].
pub fn generate_demonstration(door_type: DoorType, offset: f64, jitter_seed: u64) -> Result<Demonstration> {
    if !(-MAX_OFFSET..=MAX_OFFSET).contains(&offset) {
        return Err(Error::InvalidArgument(format!("door offset {offset} outside ±{MAX_OFFSET}")));
    }
    let mut rng = RngStream::new(jitter_seed);
    let mut script = Script::new(door_type, offset, &mut rng, true);
    let mut state = EnvState::new(door_type, offset, DEMO_START);
    let mut states = vec![state];
    let mut observations = vec![observe(&state)];
    let mut commands = Vec::with_capacity(DEMO_LENGTH - 1);
    for _ in 1..DEMO_LENGTH {
        let cmd = script.command(&state);
        state = env_step(&state, &cmd);
        commands.push(cmd);
        states.push(state);
        observations.push(observe(&state));
    }
    if state.door_open < DEMO_MIN_OPEN {
        return Err(Error::Controller(format!(
            "scripted {door_type} demonstration ended at opening {:.3} (< {DEMO_MIN_OPEN})",
            state.door_open
        )));
    }
    Ok(Demonstration { door_type, offset, states, observations, commands })
}

impl Demonstration {
    pub fn trajectory(&self, id: impl Into<String>, normalizer: &Normalizer) -> Trajectory {
        Trajectory { id: id.into(), door_type: self.door_type, frames: self.observations.iter().map(|o| normalizer.frame(o)).collect() }
    }
}

/// `per_type` demonstrations for each listed door type, with seeded offsets
/// and jitter. Trajectory ids are `<type>_<index>`.
pub fn generate_dataset(types: &[DoorType], per_type: usize, seed: u64) -> Result<(Dataset, Vec<Demonstration>)> {
    let normalizer = Normalizer::default();
    let mut trajectories = Vec::with_capacity(types.len() * per_type);
    let mut demos = Vec::with_capacity(types.len() * per_type);
    for &door in types {
        for i in 0..per_type {
            let mut rng = RngStream::new(seed).split(door.index() as u64).split(i as u64);
            let offset = rng.uniform(-MAX_OFFSET, MAX_OFFSET);
            let demo = generate_demonstration(door, offset, rng.next_u64())?;
            trajectories.push(demo.trajectory(format!("{door}_{i:02}"), &normalizer));
            demos.push(demo);
        }
    }
    Ok((Dataset { normalizer, trajectories }, demos))
}

/// Noise-free scripted controller usable as an oracle policy from any start.
pub(super) struct OracleScript(Script);

impl OracleScript {
    pub(super) fn new(door_type: DoorType, offset: f64) -> Self {
        let mut rng = RngStream::new(0);
        OracleScript(Script::new(door_type, offset, &mut rng, false))
    }

    pub(super) fn command(&mut self, s: &EnvState) -> [f64; 4] {
        self.0.command(s)
    }
}
