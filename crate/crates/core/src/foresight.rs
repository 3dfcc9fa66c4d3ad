//! Foresight: perturb the hidden state, imagine each perturbed future in
//! closed loop, and keep the candidate whose predicted variance drops most.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{sample_gaussian, RngStream};
use crate::shlstm::{closed_loop_rollout, decode, effective_horizon, HiddenState, ModelParams, PredictionOutput};

/// Which parts of the hidden state receive noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbTarget {
    SharedH,
    SharedHc,
    AllH,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonMode {
    /// Always roll `t_max` steps.
    Fixed,
    /// Roll for the effective horizon decoded by the step heads.
    Effective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Argmax,
    /// Always keep this candidate index (ablation hook).
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForesightConfig {
    pub n_candidates: usize,
    pub t_max: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub perturb_target: PerturbTarget,
    /// Candidate 0 is the unperturbed state.
    pub include_unperturbed: bool,
    pub horizon: HorizonMode,
    pub selection: Selection,
    /// Refine only when the previous mean variance reaches this value.
    pub variance_trigger: Option<f64>,
}

impl Default for ForesightConfig {
    fn default() -> Self {
        ForesightConfig {
            n_candidates: 5,
            t_max: 10,
            sigma_min: 0.05,
            sigma_max: 0.15,
            perturb_target: PerturbTarget::SharedH,
            include_unperturbed: true,
            horizon: HorizonMode::Fixed,
            selection: Selection::Argmax,
            variance_trigger: None,
        }
    }
}

impl ForesightConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_candidates == 0 {
            return Err(Error::Config("foresight.n_candidates must be ≥ 1".into()));
        }
        if self.t_max == 0 {
            return Err(Error::Config("foresight.t_max must be ≥ 1".into()));
        }
        if !(0.0 <= self.sigma_min && self.sigma_min <= self.sigma_max) {
            return Err(Error::Config("need 0 ≤ foresight.sigma_min ≤ foresight.sigma_max".into()));
        }
        if let Selection::Fixed(k) = self.selection {
            if k >= self.n_candidates {
                return Err(Error::Config(format!("fixed selection {k} out of range for {} candidates", self.n_candidates)));
            }
        }
        Ok(())
    }
}

/// Running extremes of the scalar mean variance within one episode or sequence.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeStats {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl EpisodeStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, v: f64) {
        if self.count == 0 {
            self.min = v;
            self.max = v;
        } else {
            self.min = self.min.min(v);
            self.max = self.max.max(v);
        }
        self.count += 1;
    }
}

fn mean_of(vectors: &[Vec<f64>]) -> f64 {
    let (s, n) = vectors.iter().fold((0.0, 0usize), |(s, n), v| (s + v.iter().sum::<f64>(), n + v.len()));
    s / n.max(1) as f64
}

/// Position of `v` within the episode's running range, in `[0, 1]`.
/// A degenerate range (e.g. the first step) yields 0.5.
pub fn normalized_level(v: f64, stats: &EpisodeStats) -> f64 {
    if stats.count == 0 || stats.max <= stats.min {
        return 0.5;
    }
    ((v - stats.min) / (stats.max - stats.min)).clamp(0.0, 1.0)
}

/// Maps a scalar variance level onto `[sigma_min, sigma_max]`.
pub fn sigma_for_level(v: f64, stats: &EpisodeStats, sigma_min: f64, sigma_max: f64) -> f64 {
    sigma_min + (sigma_max - sigma_min) * normalized_level(v, stats)
}

/// Noise standard deviation from the previous step's predicted variances.
pub fn noise_intensity(prev_variance: &[Vec<f64>], stats: &EpisodeStats, cfg: &ForesightConfig) -> f64 {
    sigma_for_level(mean_of(prev_variance), stats, cfg.sigma_min, cfg.sigma_max)
}

/// Additive noise on the configured state parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub target: PerturbTarget,
    /// Shared-layer `h` noise, then shared `c` (SharedHc) or each lower `h` (AllH).
    pub noise: Vec<Vec<f64>>,
}

impl Perturbation {
    pub fn none(target: PerturbTarget) -> Self {
        Perturbation { target, noise: Vec::new() }
    }

    /// Draws the perturbation for one candidate from its own stream.
    pub fn sample(state: &HiddenState, target: PerturbTarget, sigma: f64, rng: &mut RngStream) -> Self {
        let mut noise = vec![sample_gaussian(rng, &vec![0.0; state.shared.h.len()], sigma)];
        match target {
            PerturbTarget::SharedH => {}
            PerturbTarget::SharedHc => noise.push(sample_gaussian(rng, &vec![0.0; state.shared.c.len()], sigma)),
            PerturbTarget::AllH => {
                for l in &state.lower {
                    noise.push(sample_gaussian(rng, &vec![0.0; l.h.len()], sigma));
                }
            }
        }
        Perturbation { target, noise }
    }

    pub fn apply(&self, state: &HiddenState) -> HiddenState {
        let mut out = state.clone();
        if self.noise.is_empty() {
            return out;
        }
        let add = |dst: &mut Vec<f64>, n: &[f64]| dst.iter_mut().zip(n).for_each(|(d, e)| *d += e);
        add(&mut out.shared.h, &self.noise[0]);
        match self.target {
            PerturbTarget::SharedH => {}
            PerturbTarget::SharedHc => add(&mut out.shared.c, &self.noise[1]),
            PerturbTarget::AllH => {
                for (l, n) in out.lower.iter_mut().zip(&self.noise[1..]) {
                    add(&mut l.h, n);
                }
            }
        }
        out
    }
}

/// Stream used by candidate `k` at one timestep.
pub fn candidate_stream(step_rng: &RngStream, k: usize) -> RngStream {
    step_rng.split(k as u64)
}

fn candidate_perturbation(state: &HiddenState, k: usize, sigma: f64, cfg: &ForesightConfig, step_rng: &RngStream) -> Perturbation {
    if k == 0 && cfg.include_unperturbed {
        return Perturbation::none(cfg.perturb_target);
    }
    Perturbation::sample(state, cfg.perturb_target, sigma, &mut candidate_stream(step_rng, k))
}

/// `n` candidate states; with `include_unperturbed`, candidate 0 is `state` itself.
pub fn sample_candidates(state: &HiddenState, sigma: f64, n: usize, cfg: &ForesightConfig, step_rng: &RngStream) -> Vec<(HiddenState, Perturbation)> {
    (0..n)
        .map(|k| {
            let p = candidate_perturbation(state, k, sigma, cfg, step_rng);
            (p.apply(state), p)
        })
        .collect()
}

/// The noise-only baseline: candidate 1's perturbation, without any selection.
pub fn noise_injection(state: &HiddenState, sigma: f64, cfg: &ForesightConfig, step_rng: &RngStream) -> (HiddenState, Perturbation) {
    let p = Perturbation::sample(state, cfg.perturb_target, sigma, &mut candidate_stream(step_rng, 1));
    (p.apply(state), p)
}

/// Total variance decrease from the candidate's starting decode to the end of its rollout.
pub fn score_candidate(rollout: &[PredictionOutput], initial: &PredictionOutput) -> f64 {
    let last = rollout.last().expect("rollout has at least one step");
    initial
        .modalities
        .iter()
        .zip(&last.modalities)
        .map(|(a, b)| a.variance.iter().zip(&b.variance).map(|(x, y)| x - y).sum::<f64>())
        .sum()
}

#[derive(Debug, Clone)]
pub struct CandidateResult {
    pub perturbed_state: HiddenState,
    pub perturbation: Perturbation,
    pub initial_variance: Vec<Vec<f64>>,
    pub final_variance: Vec<Vec<f64>>,
    pub score: f64,
    pub rollout: Vec<PredictionOutput>,
}

/// Per-timestep foresight record (one JSON line each).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForesightDiagnostics {
    pub sigma: f64,
    pub horizon: usize,
    pub scores: Vec<f64>,
    pub selected_index: usize,
    pub mean_var_t: f64,
    #[serde(rename = "mean_var_t+T")]
    pub mean_var_t_plus_t: f64,
    /// Mean final variance of each candidate.
    pub final_mean_vars: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Refinement {
    pub state: HiddenState,
    pub perturbation: Perturbation,
    pub selected_index: usize,
    pub candidates: Vec<CandidateResult>,
    pub diagnostics: ForesightDiagnostics,
}

/// Full foresight step. `stats` must already include the level of
/// `last_output` (see [`EpisodeStats::observe`]).
///
/// Returns `None` when a variance trigger is configured and not reached.
pub fn foresight_refine(
    state: &HiddenState,
    last_output: &PredictionOutput,
    params: &ModelParams,
    cfg: &ForesightConfig,
    stats: &EpisodeStats,
    step_rng: &RngStream,
) -> Result<Option<Refinement>> {
    let level = last_output.mean_variance();
    if let Some(th) = cfg.variance_trigger {
        if level < th {
            return Ok(None);
        }
    }
    let prev_var: Vec<Vec<f64>> = last_output.modalities.iter().map(|m| m.variance.clone()).collect();
    let sigma = noise_intensity(&prev_var, stats, cfg);
    let horizon = match cfg.horizon {
        HorizonMode::Fixed => cfg.t_max,
        HorizonMode::Effective => effective_horizon(last_output, cfg.t_max),
    };

    let mut candidates = Vec::with_capacity(cfg.n_candidates);
    for (perturbed_state, perturbation) in sample_candidates(state, sigma, cfg.n_candidates, cfg, step_rng) {
        let initial = decode(&perturbed_state, params);
        let rollout = closed_loop_rollout(&perturbed_state, &initial, params, horizon)?;
        let score = score_candidate(&rollout, &initial);
        let last = rollout.last().expect("horizon ≥ 1");
        candidates.push(CandidateResult {
            initial_variance: initial.modalities.iter().map(|m| m.variance.clone()).collect(),
            final_variance: last.modalities.iter().map(|m| m.variance.clone()).collect(),
            perturbed_state,
            perturbation,
            score,
            rollout,
        });
    }

    let selected_index = match cfg.selection {
        Selection::Fixed(k) => k,
        Selection::Argmax => {
            let mut best = 0;
            for (k, c) in candidates.iter().enumerate() {
                if c.score > candidates[best].score {
                    best = k;
                }
            }
            best
        }
    };
    let chosen = &candidates[selected_index];
    let diagnostics = ForesightDiagnostics {
        sigma,
        horizon,
        scores: candidates.iter().map(|c| c.score).collect(),
        selected_index,
        mean_var_t: mean_of(&chosen.initial_variance),
        mean_var_t_plus_t: mean_of(&chosen.final_variance),
        final_mean_vars: candidates.iter().map(|c| mean_of(&c.final_variance)).collect(),
    };
    Ok(Some(Refinement {
        state: chosen.perturbed_state.clone(),
        perturbation: chosen.perturbation.clone(),
        selected_index,
        candidates,
        diagnostics,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shlstm::{ModalityOutput, ModelConfig};

    fn level_stats(lo: f64, hi: f64) -> EpisodeStats {
        let mut s = EpisodeStats::new();
        s.observe(lo);
        s.observe(hi);
        s
    }

    #[test]
    fn intensity_endpoints() {
        let cfg = ForesightConfig::default();
        let stats = level_stats(0.2, 0.6);
        assert!((noise_intensity(&[vec![0.2, 0.2]], &stats, &cfg) - 0.05).abs() < 1e-12);
        assert!((noise_intensity(&[vec![0.6], vec![0.6]], &stats, &cfg) - 0.15).abs() < 1e-9);
        let mut first = EpisodeStats::new();
        first.observe(0.4);
        assert!((noise_intensity(&[vec![0.4]], &first, &cfg) - 0.10).abs() < 1e-15);
        assert!((noise_intensity(&[vec![0.4]], &EpisodeStats::new(), &cfg) - 0.10).abs() < 1e-15);
    }

    #[test]
    fn intensity_is_monotone_and_bounded() {
        let cfg = ForesightConfig::default();
        let stats = level_stats(0.1, 0.9);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=200 {
            let v = -0.5 + i as f64 * 0.01;
            let s = noise_intensity(&[vec![v]], &stats, &cfg);
            assert!((0.05..=0.15).contains(&s));
            assert!(s >= prev);
            prev = s;
        }
    }

    fn out(vars: &[f64]) -> PredictionOutput {
        PredictionOutput { modalities: vec![ModalityOutput { mean: vec![0.0; vars.len()], variance: vars.to_vec(), step: 1.0 }] }
    }

    #[test]
    fn scores() {
        assert_eq!(score_candidate(&[out(&[0.3, 0.1])], &out(&[0.3, 0.1])), 0.0);
        assert!((score_candidate(&[out(&[0.5]), out(&[0.05, 0.05])], &out(&[0.2, 0.2])) - 0.3).abs() < 1e-12);
        assert!(score_candidate(&[out(&[0.4, 0.4])], &out(&[0.2, 0.2])) < 0.0);
    }

    #[test]
    fn candidate_structure() {
        let mcfg = ModelConfig::default();
        let mut rng = RngStream::new(1);
        let mut state = HiddenState::zeros(&mcfg);
        state.shared.h.iter_mut().for_each(|v| *v = rng.normal());
        let cfg = ForesightConfig::default();
        let step = RngStream::new(99);
        let same = sample_candidates(&state, 0.0, 5, &cfg, &step);
        assert!(same.iter().all(|(s, _)| *s == state));
        let one = sample_candidates(&state, 0.1, 1, &cfg, &step);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].0, state);
        let five = sample_candidates(&state, 0.1, 5, &cfg, &step);
        assert_eq!(five[0].0, state);
        for (s, _) in &five[1..] {
            assert_eq!(s.lower, state.lower);
            assert_eq!(s.shared.c, state.shared.c);
            assert_ne!(s.shared.h, state.shared.h);
        }
        // the baseline hook reproduces candidate 1 exactly
        assert_eq!(noise_injection(&state, 0.1, &cfg, &step).0, five[1].0);
    }
}
