use super::{slot, LayerState, ModelConfig, ModelParams, StepCache};
use crate::numkernel::linalg::{axpy, gemv_t_acc, ger_acc, sigmoid};
use crate::numkernel::lstm::lstm_activate_backward;
use crate::numkernel::ParamSet;

/// Loss gradient with respect to one step's head outputs.
#[derive(Debug, Clone)]
pub struct OutputGrad {
    pub d_mean: Vec<Vec<f64>>,
    pub d_var: Vec<Vec<f64>>,
    pub d_step: Vec<f64>,
}

impl OutputGrad {
    pub fn zeros(config: &ModelConfig) -> Self {
        OutputGrad {
            d_mean: config.modalities.iter().map(|m| vec![0.0; m.dim]).collect(),
            d_var: config.modalities.iter().map(|m| vec![0.0; m.dim]).collect(),
            d_step: vec![0.0; config.modalities.len()],
        }
    }
}

/// Loss gradient with respect to a [`super::HiddenState`]; `h`/`c` hold `dL/dh`, `dL/dc`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGrad {
    pub lower: Vec<LayerState>,
    pub shared: LayerState,
}

impl StateGrad {
    pub fn zeros(config: &ModelConfig) -> Self {
        StateGrad {
            lower: config.modalities.iter().map(|m| LayerState::zeros(m.lower_hidden)).collect(),
            shared: LayerState::zeros(config.shared_hidden),
        }
    }
}

/// Backpropagates one step. `carry` is the gradient arriving at the step's
/// output state; the return value is the gradient at its input state
/// (`cache.prev`). Parameter gradients accumulate into `grads`.
pub fn backward_step(params: &ModelParams, cache: &StepCache, out_grad: &OutputGrad, carry: &StateGrad, grads: &mut ParamSet) -> StateGrad {
    let cfg = &params.config;
    let n_mod = cfg.modalities.len();
    let t_max = cfg.t_max as f64;

    let mut dh: Vec<Vec<f64>> = carry.lower.iter().map(|l| l.h.clone()).collect();

    // output heads
    for m in 0..n_mod {
        let h = &cache.new_lower_h[m];
        let d_mean_pre: Vec<f64> = out_grad.d_mean[m].iter().zip(&cache.mean_out[m]).map(|(g, mu)| g * (1.0 - mu * mu)).collect();
        let d_var_pre: Vec<f64> = out_grad.d_var[m].iter().zip(&cache.var_pre[m]).map(|(g, &p)| g * sigmoid(p)).collect();
        ger_acc(&mut grads.arrays[ModelParams::lower_index(m, slot::MEAN_W)].values, &d_mean_pre, h);
        axpy(&mut grads.arrays[ModelParams::lower_index(m, slot::MEAN_B)].values, 1.0, &d_mean_pre);
        gemv_t_acc(&mut dh[m], params.lower(m, slot::MEAN_W), &d_mean_pre);
        ger_acc(&mut grads.arrays[ModelParams::lower_index(m, slot::VAR_W)].values, &d_var_pre, h);
        axpy(&mut grads.arrays[ModelParams::lower_index(m, slot::VAR_B)].values, 1.0, &d_var_pre);
        gemv_t_acc(&mut dh[m], params.lower(m, slot::VAR_W), &d_var_pre);
        let ds = out_grad.d_step[m];
        if ds != 0.0 {
            let s = cache.step_sig[m];
            let d_pre = ds * (t_max - 1.0) * s * (1.0 - s);
            axpy(&mut grads.arrays[ModelParams::lower_index(m, slot::STEP_W)].values, d_pre, h);
            grads.arrays[ModelParams::lower_index(m, slot::STEP_B)].values[0] += d_pre;
            axpy(&mut dh[m], d_pre, params.lower(m, slot::STEP_W));
        }
    }

    // shared layer
    let a_s = 1.0 / cfg.tau_shared;
    let dh_tilde_s: Vec<f64> = carry.shared.h.iter().map(|g| a_s * g).collect();
    let mut d_prev_shared_h: Vec<f64> = carry.shared.h.iter().map(|g| (1.0 - a_s) * g).collect();
    let (d_pre_s, d_prev_shared_c) = lstm_activate_backward(&cache.shared_gates, &dh_tilde_s, &carry.shared.c);
    let wx_s = params.shared_index(slot::W_X);
    let wh_s = params.shared_index(slot::W_H);
    let b_s = params.shared_index(slot::B_SHARED);
    ger_acc(&mut grads.arrays[wx_s].values, &d_pre_s, &cache.shared_in);
    ger_acc(&mut grads.arrays[wh_s].values, &d_pre_s, &cache.prev.shared.h);
    axpy(&mut grads.arrays[b_s].values, 1.0, &d_pre_s);
    let mut d_shared_in = vec![0.0; cache.shared_in.len()];
    gemv_t_acc(&mut d_shared_in, params.shared(slot::W_X), &d_pre_s);
    gemv_t_acc(&mut d_prev_shared_h, params.shared(slot::W_H), &d_pre_s);
    let mut offset = 0;
    for (m, spec) in cfg.modalities.iter().enumerate() {
        axpy(&mut dh[m], 1.0, &d_shared_in[offset..offset + spec.lower_hidden]);
        offset += spec.lower_hidden;
    }

    // lower layers
    let a_l = 1.0 / cfg.tau_low;
    let mut lower = Vec::with_capacity(n_mod);
    for m in 0..n_mod {
        let dh_tilde: Vec<f64> = dh[m].iter().map(|g| a_l * g).collect();
        let mut d_prev_h: Vec<f64> = dh[m].iter().map(|g| (1.0 - a_l) * g).collect();
        let (d_pre, d_prev_c) = lstm_activate_backward(&cache.lower_gates[m], &dh_tilde, &carry.lower[m].c);
        ger_acc(&mut grads.arrays[ModelParams::lower_index(m, slot::W_X)].values, &d_pre, &cache.inputs[m]);
        ger_acc(&mut grads.arrays[ModelParams::lower_index(m, slot::W_H)].values, &d_pre, &cache.prev.lower[m].h);
        ger_acc(&mut grads.arrays[ModelParams::lower_index(m, slot::W_FB)].values, &d_pre, &cache.prev.shared.h);
        axpy(&mut grads.arrays[ModelParams::lower_index(m, slot::B)].values, 1.0, &d_pre);
        gemv_t_acc(&mut d_prev_h, params.lower(m, slot::W_H), &d_pre);
        gemv_t_acc(&mut d_prev_shared_h, params.lower(m, slot::W_FB), &d_pre);
        lower.push(LayerState { h: d_prev_h, c: d_prev_c });
    }

    StateGrad { lower, shared: LayerState { h: d_prev_shared_h, c: d_prev_shared_c } }
}
