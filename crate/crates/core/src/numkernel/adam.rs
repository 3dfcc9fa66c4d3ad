use super::params::ParamSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moments plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ParamSet,
    pub v: ParamSet,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        AdamState { m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }
}

/// One bias-corrected Adam update. Gradients must line up with `params`
/// array-for-array; any non-finite gradient aborts before anything changes.
pub fn adam_step(params: &mut ParamSet, grads: &ParamSet, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    let mismatches = params.layout_mismatches(grads);
    if !mismatches.is_empty() {
        return Err(Error::DimensionMismatch(format!("gradients do not match parameters: {}", mismatches.join(", "))));
    }
    if let Some(bad) = grads.arrays.iter().find(|a| a.values.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite { what: format!("gradient {}", bad.name) });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in params
        .arrays
        .iter_mut()
        .zip(&grads.arrays)
        .zip(state.m.arrays.iter_mut())
        .zip(state.v.arrays.iter_mut())
    {
        for k in 0..p.values.len() {
            let gk = g.values[k];
            m.values[k] = cfg.beta1 * m.values[k] + (1.0 - cfg.beta1) * gk;
            v.values[k] = cfg.beta2 * v.values[k] + (1.0 - cfg.beta2) * gk * gk;
            let m_hat = m.values[k] / bc1;
            let v_hat = v.values[k] / bc2;
            p.values[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
