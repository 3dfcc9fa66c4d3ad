use super::Variant;
use crate::error::{Error, Result};
use crate::foresight::{foresight_refine, noise_injection, normalized_level, sigma_for_level, EpisodeStats, ForesightConfig, ForesightDiagnostics, Perturbation};
use crate::numkernel::nll::gaussian_nll_grad;
use crate::numkernel::{ParamSet, RngStream};
use crate::shlstm::{backward_step, decode, forward_step_cached, Frame, HiddenState, ModelParams, OutputGrad, PredictionOutput, StateGrad, StepCache, StepMode};

/// What a variant hook did to the state before one prediction.
#[derive(Debug, Clone)]
pub struct HookOutcome {
    pub state: HiddenState,
    pub perturbation: Option<Perturbation>,
    pub sigma: Option<f64>,
    pub diagnostics: Option<ForesightDiagnostics>,
}

/// Runs the per-step variant hook. `prev_output` is the prediction made on
/// the previous step (or the decode of the initial state); its mean variance
/// is folded into `stats` first.
pub fn apply_variant_hook(
    variant: Variant,
    state: &HiddenState,
    prev_output: &PredictionOutput,
    stats: &mut EpisodeStats,
    cfg: &ForesightConfig,
    params: &ModelParams,
    step_rng: &RngStream,
) -> Result<HookOutcome> {
    let level = prev_output.mean_variance();
    stats.observe(level);
    match variant {
        Variant::Sh => Ok(HookOutcome { state: state.clone(), perturbation: None, sigma: None, diagnostics: None }),
        Variant::ShNoise => {
            let sigma = sigma_for_level(level, stats, cfg.sigma_min, cfg.sigma_max);
            let (s, p) = noise_injection(state, sigma, cfg, step_rng);
            Ok(HookOutcome { state: s, perturbation: Some(p), sigma: Some(sigma), diagnostics: None })
        }
        Variant::Ufrnn => match foresight_refine(state, prev_output, params, cfg, stats, step_rng)? {
            Some(r) => Ok(HookOutcome {
                state: r.state,
                perturbation: Some(r.perturbation),
                sigma: Some(r.diagnostics.sigma),
                diagnostics: Some(r.diagnostics),
            }),
            None => Ok(HookOutcome { state: state.clone(), perturbation: None, sigma: None, diagnostics: None }),
        },
    }
}

/// Frozen per-step randomness of one sequence pass: the perturbation that
/// was applied and, in proxy step mode, the step-head targets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepTrace {
    pub perturbation: Option<Perturbation>,
    pub step_target: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SequenceTrace {
    pub steps: Vec<StepTrace>,
}

#[derive(Debug, Clone)]
pub struct SequenceLoss {
    /// Summed NLL plus any step-head proxy term.
    pub loss: f64,
    /// Summed NLL per modality.
    pub nll: Vec<f64>,
    pub steps: usize,
    pub grads: Option<ParamSet>,
    pub outputs: Vec<PredictionOutput>,
    pub trace: SequenceTrace,
    pub sigmas: Vec<Option<f64>>,
    pub diagnostics: Vec<Option<ForesightDiagnostics>>,
}

enum Mode<'a> {
    Live { variant: Variant, cfg: &'a ForesightConfig, rng: &'a RngStream },
    Replay(&'a SequenceTrace),
}

fn step_proxy(step: f64, target: f64, t_max: usize) -> (f64, f64) {
    let span = (t_max as f64 - 1.0).max(1.0);
    let r = (step - target) / span;
    (0.5 * r * r, r / span)
}

fn run(frames: &[Frame], params: &ModelParams, initial: &HiddenState, mode: Mode<'_>, want_grads: bool) -> Result<SequenceLoss> {
    if frames.len() < 2 {
        return Err(Error::InvalidArgument("sequence needs at least 2 frames".into()));
    }
    let n = frames.len() - 1;
    if let Mode::Replay(trace) = &mode {
        if trace.steps.len() != n {
            return Err(Error::InvalidArgument(format!("trace covers {} steps, sequence has {n}", trace.steps.len())));
        }
    }
    let cfg = &params.config;
    let proxy = cfg.step_mode == StepMode::Proxy;
    let n_mod = cfg.modalities.len();

    let mut state = initial.clone();
    let mut prev_output = decode(&state, params);
    let mut stats = EpisodeStats::new();
    let mut nll = vec![0.0; n_mod];
    let mut total = 0.0;
    let mut outputs = Vec::with_capacity(n);
    let mut caches: Vec<StepCache> = Vec::with_capacity(if want_grads { n } else { 0 });
    let mut out_grads: Vec<OutputGrad> = Vec::with_capacity(if want_grads { n } else { 0 });
    let mut trace = SequenceTrace { steps: Vec::with_capacity(n) };
    let mut sigmas = Vec::with_capacity(n);
    let mut diagnostics = Vec::with_capacity(n);

    for t in 0..n {
        let mut step = StepTrace::default();
        let input_state = match &mode {
            Mode::Live { variant, cfg: fcfg, rng } => {
                let level = prev_output.mean_variance();
                let hook = apply_variant_hook(*variant, &state, &prev_output, &mut stats, fcfg, params, &rng.split(t as u64))?;
                if proxy {
                    step.step_target = Some(1.0 + (cfg.t_max as f64 - 1.0) * normalized_level(level, &stats));
                }
                step.perturbation = hook.perturbation;
                sigmas.push(hook.sigma);
                diagnostics.push(hook.diagnostics);
                hook.state
            }
            Mode::Replay(tr) => {
                step = tr.steps[t].clone();
                sigmas.push(None);
                diagnostics.push(None);
                match &step.perturbation {
                    Some(p) => p.apply(&state),
                    None => state.clone(),
                }
            }
        };

        let (out, next, cache) = forward_step_cached(&frames[t], &input_state, params)?;
        let mut g = OutputGrad::zeros(cfg);
        let mut step_loss = 0.0;
        for m in 0..n_mod {
            let mo = &out.modalities[m];
            let (l, dm, dv) = gaussian_nll_grad(&mo.mean, &mo.variance, &frames[t + 1][m])?;
            nll[m] += l;
            step_loss += l;
            g.d_mean[m] = dm;
            g.d_var[m] = dv;
            if let Some(target) = step.step_target {
                let (pl, ds) = step_proxy(mo.step, target, cfg.t_max);
                step_loss += pl;
                g.d_step[m] = ds;
            }
        }
        if !step_loss.is_finite() {
            return Err(Error::NonFiniteLoss { timestep: t });
        }
        total += step_loss;
        if want_grads {
            caches.push(cache);
            out_grads.push(g);
        }
        trace.steps.push(step);
        state = next;
        prev_output = out.clone();
        outputs.push(out);
    }

    let grads = if want_grads {
        let mut grads = params.set.zeros_like();
        let mut carry = StateGrad::zeros(cfg);
        // perturbations are additive constants, so the carry passes through them unchanged
        for t in (0..n).rev() {
            carry = backward_step(params, &caches[t], &out_grads[t], &carry, &mut grads);
        }
        Some(grads)
    } else {
        None
    };

    Ok(SequenceLoss { loss: total, nll, steps: n, grads, outputs, trace, sigmas, diagnostics })
}

/// Teacher-forced loss and exact BPTT gradients for one sequence from a zero
/// initial state. `rng` is the sequence's stream; step `t` uses `rng.split(t)`.
pub fn sequence_loss(frames: &[Frame], params: &ModelParams, variant: Variant, cfg: &ForesightConfig, rng: &RngStream) -> Result<SequenceLoss> {
    sequence_loss_from(frames, params, variant, cfg, rng, &HiddenState::zeros(&params.config))
}

pub fn sequence_loss_from(
    frames: &[Frame],
    params: &ModelParams,
    variant: Variant,
    cfg: &ForesightConfig,
    rng: &RngStream,
    initial: &HiddenState,
) -> Result<SequenceLoss> {
    run(frames, params, initial, Mode::Live { variant, cfg, rng }, true)
}

/// Re-evaluates a sequence with the perturbations and targets of `trace`
/// held fixed. With `params` unchanged this reproduces the live loss; under
/// parameter perturbation it is the function whose gradient BPTT computes.
pub fn replay_loss(frames: &[Frame], params: &ModelParams, trace: &SequenceTrace, initial: &HiddenState, want_grads: bool) -> Result<SequenceLoss> {
    run(frames, params, initial, Mode::Replay(trace), want_grads)
}
