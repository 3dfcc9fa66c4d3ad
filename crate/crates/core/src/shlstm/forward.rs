use super::{slot, Frame, HiddenState, LayerState, ModalityOutput, ModelParams, PredictionOutput};
use crate::error::{Error, Result};
use crate::numkernel::linalg::{dot, gemv_acc, sigmoid, softplus};
use crate::numkernel::lstm::{lstm_activate, GateCache};
use crate::numkernel::VARIANCE_FLOOR;

/// Intermediate values of one [`forward_step`], kept for backpropagation.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub inputs: Frame,
    pub prev: HiddenState,
    pub lower_gates: Vec<GateCache>,
    pub lower_h_tilde: Vec<Vec<f64>>,
    pub shared_in: Vec<f64>,
    pub shared_gates: GateCache,
    pub shared_h_tilde: Vec<f64>,
    pub new_lower_h: Vec<Vec<f64>>,
    pub mean_out: Vec<Vec<f64>>,
    pub var_pre: Vec<Vec<f64>>,
    pub step_sig: Vec<f64>,
}

fn check_inputs(params: &ModelParams, inputs: &[Vec<f64>]) -> Result<()> {
    let mods = &params.config.modalities;
    if inputs.len() != mods.len() {
        return Err(Error::DimensionMismatch(format!("{} input modalities, model has {}", inputs.len(), mods.len())));
    }
    for (x, m) in inputs.iter().zip(mods) {
        if x.len() != m.dim {
            return Err(Error::DimensionMismatch(format!("input {} has {} values, expected {}", m.name, x.len(), m.dim)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: format!("input {}", m.name) });
        }
    }
    Ok(())
}

fn decode_modality(params: &ModelParams, m: usize, h: &[f64]) -> (ModalityOutput, Vec<f64>, f64) {
    let dim = params.config.modalities[m].dim;
    let t_max = params.config.t_max as f64;
    let mut mean = params.lower(m, slot::MEAN_B).to_vec();
    gemv_acc(&mut mean, params.lower(m, slot::MEAN_W), h);
    mean.iter_mut().for_each(|v| *v = v.tanh());
    let mut var_pre = params.lower(m, slot::VAR_B).to_vec();
    gemv_acc(&mut var_pre, params.lower(m, slot::VAR_W), h);
    let variance = var_pre.iter().map(|&v| softplus(v) + VARIANCE_FLOOR).collect();
    let s = sigmoid(dot(params.lower(m, slot::STEP_W), h) + params.lower(m, slot::STEP_B)[0]);
    debug_assert_eq!(mean.len(), dim);
    (ModalityOutput { mean, variance, step: 1.0 + (t_max - 1.0) * s }, var_pre, s)
}

/// Applies the output heads to the lower-layer hidden vectors of `state`.
pub fn decode(state: &HiddenState, params: &ModelParams) -> PredictionOutput {
    PredictionOutput {
        modalities: (0..params.config.modalities.len()).map(|m| decode_modality(params, m, &state.lower[m].h).0).collect(),
    }
}

fn leak(prev: &[f64], fresh: &[f64], tau: f64) -> Vec<f64> {
    let a = 1.0 / tau;
    prev.iter().zip(fresh).map(|(p, f)| (1.0 - a) * p + a * f).collect()
}

/// One model step. Returns the prediction for the next frame, the new state
/// and the cache needed by [`super::backward_step`].
pub fn forward_step_cached(inputs: &[Vec<f64>], state: &HiddenState, params: &ModelParams) -> Result<(PredictionOutput, HiddenState, StepCache)> {
    check_inputs(params, inputs)?;
    let cfg = &params.config;
    let n_mod = cfg.modalities.len();

    let mut lower_gates = Vec::with_capacity(n_mod);
    let mut lower_h_tilde = Vec::with_capacity(n_mod);
    let mut new_lower = Vec::with_capacity(n_mod);
    for (m, x) in inputs.iter().enumerate() {
        let prev = &state.lower[m];
        let mut pre = params.lower(m, slot::B).to_vec();
        gemv_acc(&mut pre, params.lower(m, slot::W_X), x);
        gemv_acc(&mut pre, params.lower(m, slot::W_H), &prev.h);
        gemv_acc(&mut pre, params.lower(m, slot::W_FB), &state.shared.h);
        let (h_tilde, c, gates) = lstm_activate(&pre, &prev.c);
        let h = leak(&prev.h, &h_tilde, cfg.tau_low);
        lower_gates.push(gates);
        lower_h_tilde.push(h_tilde);
        new_lower.push(LayerState { h, c });
    }

    let shared_in: Vec<f64> = new_lower.iter().flat_map(|l| l.h.iter().copied()).collect();
    let mut pre = params.shared(slot::B_SHARED).to_vec();
    gemv_acc(&mut pre, params.shared(slot::W_X), &shared_in);
    gemv_acc(&mut pre, params.shared(slot::W_H), &state.shared.h);
    let (shared_h_tilde, shared_c, shared_gates) = lstm_activate(&pre, &state.shared.c);
    let shared_h = leak(&state.shared.h, &shared_h_tilde, cfg.tau_shared);

    let mut modalities = Vec::with_capacity(n_mod);
    let mut var_pre = Vec::with_capacity(n_mod);
    let mut step_sig = Vec::with_capacity(n_mod);
    for (m, l) in new_lower.iter().enumerate() {
        let (o, vp, s) = decode_modality(params, m, &l.h);
        modalities.push(o);
        var_pre.push(vp);
        step_sig.push(s);
    }

    let new_state = HiddenState { lower: new_lower, shared: LayerState { h: shared_h, c: shared_c } };
    let mean_out = modalities.iter().map(|o: &ModalityOutput| o.mean.clone()).collect();
    let cache = StepCache {
        inputs: inputs.to_vec(),
        prev: state.clone(),
        lower_gates,
        lower_h_tilde,
        shared_in,
        shared_gates,
        shared_h_tilde,
        new_lower_h: new_state.lower.iter().map(|l| l.h.clone()).collect(),
        mean_out,
        var_pre,
        step_sig,
    };
    Ok((PredictionOutput { modalities }, new_state, cache))
}

// Gate nonlinearities without keeping a cache; same arithmetic as `lstm_activate`.
fn activate_into(pre: &[f64], prev_h: &[f64], c_prev: &[f64], tau: f64) -> LayerState {
    let hid = c_prev.len();
    let a = 1.0 / tau;
    let mut h = Vec::with_capacity(hid);
    let mut c = Vec::with_capacity(hid);
    for k in 0..hid {
        let i = sigmoid(pre[k]);
        let f = sigmoid(pre[hid + k]);
        let g = pre[2 * hid + k].tanh();
        let o = sigmoid(pre[3 * hid + k]);
        let ck = f * c_prev[k] + i * g;
        c.push(ck);
        h.push((1.0 - a) * prev_h[k] + a * (o * ck.tanh()));
    }
    LayerState { h, c }
}

/// [`forward_step_cached`] without the cache; bit-identical outputs.
pub fn forward_step(inputs: &[Vec<f64>], state: &HiddenState, params: &ModelParams) -> Result<(PredictionOutput, HiddenState)> {
    check_inputs(params, inputs)?;
    let cfg = &params.config;
    let mut lower = Vec::with_capacity(inputs.len());
    for (m, x) in inputs.iter().enumerate() {
        let prev = &state.lower[m];
        let mut pre = params.lower(m, slot::B).to_vec();
        gemv_acc(&mut pre, params.lower(m, slot::W_X), x);
        gemv_acc(&mut pre, params.lower(m, slot::W_H), &prev.h);
        gemv_acc(&mut pre, params.lower(m, slot::W_FB), &state.shared.h);
        lower.push(activate_into(&pre, &prev.h, &prev.c, cfg.tau_low));
    }
    let shared_in: Vec<f64> = lower.iter().flat_map(|l| l.h.iter().copied()).collect();
    let mut pre = params.shared(slot::B_SHARED).to_vec();
    gemv_acc(&mut pre, params.shared(slot::W_X), &shared_in);
    gemv_acc(&mut pre, params.shared(slot::W_H), &state.shared.h);
    let shared = activate_into(&pre, &state.shared.h, &state.shared.c, cfg.tau_shared);
    let modalities = lower.iter().enumerate().map(|(m, l)| decode_modality(params, m, &l.h).0).collect();
    Ok((PredictionOutput { modalities }, HiddenState { lower, shared }))
}

/// Teacher-forced pass: consumes frames `0..len-1`, predicting frames `1..len`.
/// Returns the `len - 1` predictions and the state after each step.
pub fn open_loop_rollout(frames: &[Frame], params: &ModelParams, initial: &HiddenState) -> Result<(Vec<PredictionOutput>, Vec<HiddenState>)> {
    if frames.len() < 2 {
        return Err(Error::InvalidArgument("open-loop rollout needs at least 2 frames".into()));
    }
    let mut outputs = Vec::with_capacity(frames.len() - 1);
    let mut states = Vec::with_capacity(frames.len() - 1);
    let mut state = initial.clone();
    for frame in &frames[..frames.len() - 1] {
        let (o, s) = forward_step(frame, &state, params)?;
        outputs.push(o);
        states.push(s.clone());
        state = s;
    }
    Ok((outputs, states))
}

/// Feeds the model its own predicted means for `steps` steps, starting from
/// `seed`'s means. Returns the predictions and the final state.
pub fn closed_loop_rollout_with_state(state: &HiddenState, seed: &PredictionOutput, params: &ModelParams, steps: usize) -> Result<(Vec<PredictionOutput>, HiddenState)> {
    let mut outputs: Vec<PredictionOutput> = Vec::with_capacity(steps);
    let mut s = state.clone();
    let mut input = seed.means();
    for _ in 0..steps {
        let (o, next) = forward_step(&input, &s, params)?;
        input = o.means();
        outputs.push(o);
        s = next;
    }
    Ok((outputs, s))
}

pub fn closed_loop_rollout(state: &HiddenState, seed: &PredictionOutput, params: &ModelParams, steps: usize) -> Result<Vec<PredictionOutput>> {
    if steps == 0 {
        return Err(Error::InvalidArgument("closed-loop rollout needs at least 1 step".into()));
    }
    closed_loop_rollout_with_state(state, seed, params, steps).map(|(o, _)| o)
}
