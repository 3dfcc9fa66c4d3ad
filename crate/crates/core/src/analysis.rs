//! Finite-time Lyapunov exponents of closed-loop rollouts, PCA projections of
//! shared hidden trajectories, and per-step variance traces.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::doorworld::{DoorType, EpisodeLog};
use crate::error::{Error, Result};
use crate::numkernel::linalg::norm;
use crate::numkernel::{pca_fit, Pca, RngStream};
use crate::shlstm::{closed_loop_rollout_with_state, decode, open_loop_rollout, Frame, HiddenState, ModelParams};

/// Lower bound reported when a perturbation collapses to exactly zero.
pub const LYAPUNOV_FLOOR: f64 = -20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub timestep: usize,
    /// Nats per step.
    pub lambda: f64,
    pub n_directions: usize,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovOptions {
    pub horizon: usize,
    pub epsilon: f64,
    pub directions: usize,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        LyapunovOptions { horizon: 10, epsilon: 1e-4, directions: 10 }
    }
}

/// A map from a starting shared-h vector to the shared-h vector `steps` later.
pub trait SharedDynamics {
    fn evolve(&self, h: &[f64], steps: usize) -> Result<Vec<f64>>;
}

/// Closed-loop model rollout from a fixed state, varying only its shared `h`.
pub struct ModelRollout<'a> {
    pub params: &'a ModelParams,
    pub state: &'a HiddenState,
}

impl SharedDynamics for ModelRollout<'_> {
    fn evolve(&self, h: &[f64], steps: usize) -> Result<Vec<f64>> {
        let mut s = self.state.clone();
        s.shared.h = h.to_vec();
        let seed = decode(&s, self.params);
        let (_, end) = closed_loop_rollout_with_state(&s, &seed, self.params, steps)?;
        Ok(end.shared.h)
    }
}

/// `h ↦ a·h`, applied once per step.
pub struct LinearMap(pub f64);

impl SharedDynamics for LinearMap {
    fn evolve(&self, h: &[f64], steps: usize) -> Result<Vec<f64>> {
        let g = self.0.powi(steps as i32);
        Ok(h.iter().map(|v| g * v).collect())
    }
}

/// Direction-averaged finite-time exponent around `h0`.
pub fn lyapunov_with(dynamics: &dyn SharedDynamics, h0: &[f64], timestep: usize, opts: &LyapunovOptions, rng: &mut RngStream) -> Result<LyapunovEstimate> {
    if opts.horizon == 0 || opts.directions == 0 {
        return Err(Error::InvalidArgument("Lyapunov estimate needs horizon ≥ 1 and ≥ 1 direction".into()));
    }
    if !(opts.epsilon > 0.0) {
        return Err(Error::InvalidArgument("Lyapunov epsilon must be positive".into()));
    }
    let base = dynamics.evolve(h0, opts.horizon)?;
    let mut sum = 0.0;
    for _ in 0..opts.directions {
        let mut u: Vec<f64> = (0..h0.len()).map(|_| rng.normal()).collect();
        let n = norm(&u);
        u.iter_mut().for_each(|v| *v /= n);
        let start: Vec<f64> = h0.iter().zip(&u).map(|(h, d)| h + opts.epsilon * d).collect();
        let end = dynamics.evolve(&start, opts.horizon)?;
        let diff: Vec<f64> = end.iter().zip(&base).map(|(a, b)| a - b).collect();
        let dist = norm(&diff);
        let lambda = if dist > 0.0 { (dist / opts.epsilon).ln() / opts.horizon as f64 } else { f64::NEG_INFINITY };
        sum += lambda.max(LYAPUNOV_FLOOR);
    }
    let lambda = sum / opts.directions as f64;
    if !lambda.is_finite() {
        return Err(Error::NonFinite { what: format!("Lyapunov estimate at step {timestep}") });
    }
    Ok(LyapunovEstimate { timestep, lambda, n_directions: opts.directions, epsilon: opts.epsilon })
}

pub fn lyapunov_at(state: &HiddenState, params: &ModelParams, timestep: usize, opts: &LyapunovOptions, rng: &mut RngStream) -> Result<LyapunovEstimate> {
    lyapunov_with(&ModelRollout { params, state }, &state.shared.h, timestep, opts, rng)
}

/// Estimates at the state after every teacher-forced step (`len - 1` rows).
/// Step `t` draws its directions from `RngStream::new(seed).split(t)`.
pub fn lyapunov_trace(params: &ModelParams, frames: &[Frame], opts: &LyapunovOptions, seed: u64) -> Result<Vec<LyapunovEstimate>> {
    let (_, states) = open_loop_rollout(frames, params, &HiddenState::zeros(&params.config))?;
    let root = RngStream::new(seed);
    states.iter().enumerate().map(|(t, s)| lyapunov_at(s, params, t, opts, &mut root.split(t as u64))).collect()
}

pub fn lyapunov_csv(trace: &[LyapunovEstimate]) -> String {
    let mut out = String::from("timestep,lambda,n_directions,epsilon\n");
    for e in trace {
        let _ = writeln!(out, "{},{},{},{}", e.timestep, e.lambda, e.n_directions, e.epsilon);
    }
    out
}

/// Shared-h states of one trajectory, tagged for export.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGroup {
    /// `offline` (teacher-forced replay) or `online` (closed-loop episode).
    pub kind: String,
    pub label: String,
    pub door_type: DoorType,
    pub states: Vec<Vec<f64>>,
}

impl StateGroup {
    pub fn source(&self) -> String {
        format!("{}/{}", self.kind, self.label)
    }
}

/// Teacher-forced shared-h states of a demonstration.
pub fn offline_states(params: &ModelParams, frames: &[Frame]) -> Result<Vec<Vec<f64>>> {
    let (_, states) = open_loop_rollout(frames, params, &HiddenState::zeros(&params.config))?;
    Ok(states.into_iter().map(|s| s.shared.h).collect())
}

/// Shared-h states logged during an episode.
pub fn online_states(log: &EpisodeLog) -> Result<Vec<Vec<f64>>> {
    log.steps
        .iter()
        .map(|s| s.shared_h.clone().ok_or_else(|| Error::InvalidArgument(format!("episode step {} has no hidden state", s.t))))
        .collect()
}

/// Fits PCA on the offline groups (all groups if none are offline) and
/// projects every group with that single fit. CSV columns:
/// `source,door_type,t,pc1..pck`.
pub fn pca_trajectory_export(groups: &[StateGroup], k: usize) -> Result<(Pca, String)> {
    let mut fit_rows: Vec<Vec<f64>> = groups.iter().filter(|g| g.kind == "offline").flat_map(|g| g.states.iter().cloned()).collect();
    if fit_rows.is_empty() {
        fit_rows = groups.iter().flat_map(|g| g.states.iter().cloned()).collect();
    }
    if fit_rows.len() < 2 {
        return Err(Error::InvalidArgument(format!("PCA needs at least 2 hidden states, got {}", fit_rows.len())));
    }
    let pca = pca_fit(&fit_rows, k)?;
    let mut out = String::from("source,door_type,t");
    for i in 1..=k {
        let _ = write!(out, ",pc{i}");
    }
    out.push('\n');
    for g in groups {
        let source = g.source();
        for (t, s) in g.states.iter().enumerate() {
            let _ = write!(out, "{source},{},{t}", g.door_type);
            for v in pca.project(s) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    Ok((pca, out))
}

/// Per-step mean predicted variance per modality, plus foresight sigma and
/// the selected candidate's score when the log has them. The flag reports
/// whether the foresight columns were written.
pub fn variance_trace_export(log: &EpisodeLog, modality_names: &[&str]) -> Result<(String, bool)> {
    let has_sigma = log.steps.iter().any(|s| s.sigma.is_some());
    let mut out = String::from("t");
    for n in modality_names {
        let _ = write!(out, ",mean_var_{n}");
    }
    out.push_str(if has_sigma { ",sigma,selected_score\n" } else { "\n" });
    for s in &log.steps {
        let mv = s.mean_variance.as_ref().ok_or_else(|| Error::InvalidArgument(format!("episode step {} has no predicted variance", s.t)))?;
        if mv.len() != modality_names.len() {
            return Err(Error::DimensionMismatch(format!("step {} logs {} modalities, expected {}", s.t, mv.len(), modality_names.len())));
        }
        let _ = write!(out, "{}", s.t);
        for v in mv {
            let _ = write!(out, ",{v}");
        }
        if has_sigma {
            let sigma = s.sigma.map(|v| v.to_string()).unwrap_or_default();
            let score = s.foresight.as_ref().map(|f| f.scores[f.selected_index].to_string()).unwrap_or_default();
            let _ = write!(out, ",{sigma},{score}");
        }
        out.push('\n');
    }
    Ok((out, has_sigma))
}
