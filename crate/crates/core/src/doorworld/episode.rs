use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::demo::OracleScript;
use super::{env_step, observe, DoorType, EnvState, Observation, DEMO_START, MAX_OFFSET};
use crate::error::{Error, Result};
use crate::foresight::{EpisodeStats, ForesightConfig, ForesightDiagnostics};
use crate::numkernel::RngStream;
use crate::shlstm::{decode, forward_step, HiddenState, ModelParams, PredictionOutput};
use crate::trainer::{apply_variant_hook, Normalizer, Variant};

/// Steps `hold_from..=hold_until` during which the door cannot move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterferenceSchedule {
    pub hold_from: usize,
    pub hold_until: usize,
}

impl InterferenceSchedule {
    pub fn new(hold_from: usize, hold_until: usize) -> Result<Self> {
        if hold_from > hold_until {
            return Err(Error::InvalidArgument(format!("interference {hold_from}:{hold_until} ends before it starts")));
        }
        Ok(InterferenceSchedule { hold_from, hold_until })
    }

    pub fn active(&self, t: usize) -> bool {
        (self.hold_from..=self.hold_until).contains(&t)
    }
}

impl std::str::FromStr for InterferenceSchedule {
    type Err = Error;

    /// `from:to`, both inclusive.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("interference {s:?} is not FROM:TO"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        InterferenceSchedule::new(a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?)
    }
}

/// Initial conditions of one evaluation trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSetup {
    pub door_type: DoorType,
    pub offset: f64,
    pub start: [f64; 2],
    /// Seed of the policy's own randomness (foresight noise).
    pub seed: u64,
}

impl TrialSetup {
    /// Seeded start pose and door offset for trial `index` of `door_type`.
    pub fn sample(door_type: DoorType, index: usize, seed: u64) -> Self {
        let mut rng = RngStream::new(seed).split(door_type.index() as u64).split(index as u64);
        let offset = rng.uniform(-MAX_OFFSET, MAX_OFFSET);
        let start = [DEMO_START[0] + rng.uniform(-0.05, 0.05), DEMO_START[1] + rng.uniform(-0.05, 0.05)];
        TrialSetup { door_type, offset, start, seed: rng.next_u64() }
    }
}

/// What a policy decided at one step, plus optional internals for the log.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolicyStep {
    pub command: [f64; 4],
    pub shared_h: Option<Vec<f64>>,
    pub mean_variance: Option<Vec<f64>>,
    pub sigma: Option<f64>,
    pub foresight: Option<ForesightDiagnostics>,
}

pub trait Policy {
    fn reset(&mut self, setup: &TrialSetup);
    /// `env` is available to scripted test policies; models must only use `obs`.
    fn act(&mut self, t: usize, obs: &Observation, env: &EnvState) -> Result<PolicyStep>;
}

/// Drives the environment with a trained model's predicted joint means.
#[derive(Debug, Clone)]
pub struct ModelPolicy {
    pub params: ModelParams,
    pub variant: Variant,
    pub foresight: ForesightConfig,
    pub normalizer: Normalizer,
    rng: RngStream,
    state: HiddenState,
    stats: EpisodeStats,
    prev_output: PredictionOutput,
}

impl ModelPolicy {
    pub fn new(params: ModelParams, variant: Variant, foresight: ForesightConfig, normalizer: Normalizer) -> Self {
        let state = HiddenState::zeros(&params.config);
        let prev_output = decode(&state, &params);
        ModelPolicy { params, variant, foresight, normalizer, rng: RngStream::new(0), state, stats: EpisodeStats::new(), prev_output }
    }

    pub fn state(&self) -> &HiddenState {
        &self.state
    }
}

impl Policy for ModelPolicy {
    fn reset(&mut self, setup: &TrialSetup) {
        self.rng = RngStream::new(setup.seed);
        self.state = HiddenState::zeros(&self.params.config);
        self.stats = EpisodeStats::new();
        self.prev_output = decode(&self.state, &self.params);
    }

    fn act(&mut self, t: usize, obs: &Observation, _env: &EnvState) -> Result<PolicyStep> {
        let frame = self.normalizer.frame(obs);
        let hook = apply_variant_hook(self.variant, &self.state, &self.prev_output, &mut self.stats, &self.foresight, &self.params, &self.rng.split(t as u64))?;
        let (out, next) = forward_step(&frame, &hook.state, &self.params)?;
        let raw = self.normalizer.denormalize(0, &out.modalities[0].mean);
        let command = [raw[0], raw[1], raw[2], raw[3]];
        let mean_variance = out.modalities.iter().map(|m| m.variance.iter().sum::<f64>() / m.variance.len() as f64).collect();
        let step = PolicyStep { command, shared_h: Some(next.shared.h.clone()), mean_variance: Some(mean_variance), sigma: hook.sigma, foresight: hook.diagnostics };
        self.state = next;
        self.prev_output = out;
        Ok(step)
    }
}

/// Plays back a fixed command list, then repeats the last command.
#[derive(Debug, Clone)]
pub struct ReplayPolicy {
    pub commands: Vec<[f64; 4]>,
}

impl Policy for ReplayPolicy {
    fn reset(&mut self, _setup: &TrialSetup) {}

    fn act(&mut self, t: usize, _obs: &Observation, env: &EnvState) -> Result<PolicyStep> {
        let command = self.commands.get(t).or(self.commands.last()).copied().unwrap_or([env.hand[0], env.hand[1], env.wrist, env.grip]);
        Ok(PolicyStep { command, ..Default::default() })
    }
}

/// Noise-free scripted controller that knows the door type. Test oracle.
#[derive(Default)]
pub struct ScriptedPolicy {
    script: Option<OracleScript>,
}

impl Policy for ScriptedPolicy {
    fn reset(&mut self, setup: &TrialSetup) {
        self.script = Some(OracleScript::new(setup.door_type, setup.offset));
    }

    fn act(&mut self, _t: usize, _obs: &Observation, env: &EnvState) -> Result<PolicyStep> {
        let script = self.script.get_or_insert_with(|| OracleScript::new(env.door_type, env.offset));
        Ok(PolicyStep { command: script.command(env), ..Default::default() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub joint: [f64; 4],
    pub feat: [f64; 8],
    pub command: [f64; 4],
    /// Opening after the step.
    pub door_open: f64,
    pub knob_twist: f64,
    pub held: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_variance: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub foresight: Option<ForesightDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub shared_h: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub success: bool,
    /// Step count at which the opening first reached the success threshold.
    pub steps_to_open: Option<usize>,
    pub door_type: DoorType,
    pub offset: f64,
    pub start: [f64; 2],
    pub steps: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub interference: Option<InterferenceSchedule>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub summary: EpisodeSummary,
    pub steps: Vec<StepRecord>,
}

impl EpisodeLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&serde_json::to_string(s).expect("step record serializes"));
            out.push('\n');
        }
        out
    }

    /// Writes `<stem>.jsonl` (one record per step) and `<stem>.summary.json`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let steps = dir.join(format!("{stem}.jsonl"));
        fs::write(&steps, self.to_jsonl()).map_err(|e| Error::io(&steps, e))?;
        let summary = dir.join(format!("{stem}.summary.json"));
        let mut text = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        text.push('\n');
        fs::write(&summary, text).map_err(|e| Error::io(&summary, e))
    }

    /// Reads a log written by [`EpisodeLog::write`]; `path` is the `.jsonl` file.
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut steps = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            steps.push(serde_json::from_str(line).map_err(|e| Error::Parse { file: path.to_path_buf(), line: i + 1, msg: e.to_string() })?);
        }
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let summary_path = path.with_file_name(format!("{}.summary.json", name.trim_end_matches(".jsonl")));
        let text = fs::read_to_string(&summary_path).map_err(|e| Error::io(&summary_path, e))?;
        let summary = serde_json::from_str(&text).map_err(|e| Error::Parse { file: summary_path.clone(), line: e.line(), msg: e.to_string() })?;
        Ok(EpisodeLog { summary, steps })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOptions {
    pub max_steps: usize,
    pub interference: Option<InterferenceSchedule>,
    /// End the episode as soon as the door counts as open.
    pub stop_on_success: bool,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        EpisodeOptions { max_steps: super::DEFAULT_MAX_STEPS, interference: None, stop_on_success: true }
    }
}

/// observe → policy → env_step, until success or `max_steps`.
pub fn run_episode(policy: &mut dyn Policy, setup: &TrialSetup, opts: &EpisodeOptions) -> Result<EpisodeLog> {
    policy.reset(setup);
    let mut env = EnvState::new(setup.door_type, setup.offset, setup.start);
    let mut steps = Vec::with_capacity(opts.max_steps);
    let mut steps_to_open = None;
    for t in 0..opts.max_steps {
        env.held = opts.interference.is_some_and(|s| s.active(t));
        let obs = observe(&env);
        let act = policy.act(t, &obs, &env)?;
        env = env_step(&env, &act.command);
        steps.push(StepRecord {
            t,
            joint: obs.joint,
            feat: obs.feat,
            command: act.command,
            door_open: env.door_open,
            knob_twist: env.knob_twist,
            held: env.held,
            mean_variance: act.mean_variance,
            sigma: act.sigma,
            foresight: act.foresight,
            shared_h: act.shared_h,
        });
        if env.success() && steps_to_open.is_none() {
            steps_to_open = Some(t + 1);
            if opts.stop_on_success {
                break;
            }
        }
    }
    Ok(EpisodeLog {
        summary: EpisodeSummary {
            success: steps_to_open.is_some(),
            steps_to_open,
            door_type: setup.door_type,
            offset: setup.offset,
            start: setup.start,
            steps: steps.len(),
            interference: opts.interference,
        },
        steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuccessRow {
    pub epoch: usize,
    /// Successes per door type, in [`DoorType::ALL`] order.
    pub counts: [usize; 3],
}

impl SuccessRow {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn success_csv(rows: &[SuccessRow]) -> String {
    let mut out = String::from("epoch,push_successes,pull_successes,slide_successes\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.epoch, r.counts[0], r.counts[1], r.counts[2]);
    }
    out
}

/// Runs `trials_per_type` seeded trials per door type for each epoch's
/// policy. Every epoch sees the same trial setups. `sink` receives each log.
pub fn success_table<P: Policy>(
    epochs: &[usize],
    mut policy_for: impl FnMut(usize) -> Result<P>,
    trials_per_type: usize,
    seed: u64,
    opts: &EpisodeOptions,
    mut sink: impl FnMut(usize, &TrialSetup, usize, &EpisodeLog) -> Result<()>,
) -> Result<Vec<SuccessRow>> {
    let mut rows = Vec::with_capacity(epochs.len());
    for &epoch in epochs {
        let mut policy = policy_for(epoch)?;
        let mut counts = [0usize; 3];
        for door in DoorType::ALL {
            for i in 0..trials_per_type {
                let setup = TrialSetup::sample(door, i, seed);
                let log = run_episode(&mut policy, &setup, opts)?;
                if log.summary.success {
                    counts[door.index()] += 1;
                }
                sink(epoch, &setup, i, &log)?;
            }
        }
        rows.push(SuccessRow { epoch, counts });
    }
    Ok(rows)
}
