//! Stochastic hierarchical LSTM.
//!
//! One fast LSTM per modality feeds a slow shared LSTM; the shared state of
//! the previous step is read back into every lower layer. Each lower layer
//! decodes a mean, a variance and a horizon ("step") for its modality.

mod backward;
mod forward;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{ParamArray, ParamSet, RngStream};

pub use backward::{backward_step, OutputGrad, StateGrad};
pub use forward::{closed_loop_rollout, closed_loop_rollout_with_state, decode, forward_step, forward_step_cached, open_loop_rollout, StepCache};

/// Per-modality frame: one vector per configured modality, in config order.
pub type Frame = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalitySpec {
    pub name: String,
    pub dim: usize,
    pub lower_hidden: usize,
}

/// How the step (horizon) head is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// Foresight uses the fixed horizon `t_max`; the step head receives no gradient.
    Fixed,
    /// The step head regresses toward a target derived from the normalized
    /// predicted variance of the sequence.
    Proxy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub modalities: Vec<ModalitySpec>,
    pub shared_hidden: usize,
    pub tau_low: f64,
    pub tau_shared: f64,
    pub t_max: usize,
    pub step_mode: StepMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            modalities: vec![
                ModalitySpec { name: "joint".into(), dim: 4, lower_hidden: 50 },
                ModalitySpec { name: "feat".into(), dim: 8, lower_hidden: 50 },
            ],
            shared_hidden: 50,
            tau_low: 2.0,
            tau_shared: 12.0,
            t_max: 10,
            step_mode: StepMode::Fixed,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.modalities.is_empty() {
            return Err(Error::Config("at least one modality is required".into()));
        }
        for (i, m) in self.modalities.iter().enumerate() {
            if m.dim == 0 || m.lower_hidden == 0 {
                return Err(Error::Config(format!("modality {} needs dim ≥ 1 and lower_hidden ≥ 1", m.name)));
            }
            if self.modalities[..i].iter().any(|o| o.name == m.name) {
                return Err(Error::Config(format!("duplicate modality name {}", m.name)));
            }
        }
        if self.shared_hidden == 0 {
            return Err(Error::Config("shared_hidden must be ≥ 1".into()));
        }
        if !(self.tau_low >= 1.0 && self.tau_shared >= 1.0) {
            return Err(Error::Config("time constants must be ≥ 1".into()));
        }
        if self.t_max == 0 {
            return Err(Error::Config("t_max must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn lower_total(&self) -> usize {
        self.modalities.iter().map(|m| m.lower_hidden).sum()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.modalities.iter().map(|m| m.dim).collect()
    }
}

const PER_MODALITY: usize = 10;

/// Array positions inside [`ModelParams::set`].
pub(crate) mod slot {
    pub const W_X: usize = 0;
    pub const W_H: usize = 1;
    pub const W_FB: usize = 2;
    pub const B: usize = 3;
    pub const MEAN_W: usize = 4;
    pub const MEAN_B: usize = 5;
    pub const VAR_W: usize = 6;
    pub const VAR_B: usize = 7;
    pub const STEP_W: usize = 8;
    pub const STEP_B: usize = 9;
    pub const B_SHARED: usize = 2;
}

/// All trainable arrays of the model.
///
/// Per modality `m`: `m.lstm.w_x` (input projection), `m.lstm.w_h`,
/// `m.lstm.w_fb` (shared → lower read-in), `m.lstm.b`, and the
/// `m.head.{mean,var,step}.{w,b}` decoders. Then `shared.lstm.w_x`
/// (lower → shared projection), `shared.lstm.w_h`, `shared.lstm.b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub set: ParamSet,
}

impl ModelParams {
    /// Zero-valued parameters with the layout implied by `config`.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let s = config.shared_hidden;
        let mut arrays = Vec::new();
        for m in &config.modalities {
            let (h, d, n) = (m.lower_hidden, m.dim, &m.name);
            arrays.push(ParamArray::zeros(format!("{n}.lstm.w_x"), vec![4 * h, d]));
            arrays.push(ParamArray::zeros(format!("{n}.lstm.w_h"), vec![4 * h, h]));
            arrays.push(ParamArray::zeros(format!("{n}.lstm.w_fb"), vec![4 * h, s]));
            arrays.push(ParamArray::zeros(format!("{n}.lstm.b"), vec![4 * h]));
            arrays.push(ParamArray::zeros(format!("{n}.head.mean.w"), vec![d, h]));
            arrays.push(ParamArray::zeros(format!("{n}.head.mean.b"), vec![d]));
            arrays.push(ParamArray::zeros(format!("{n}.head.var.w"), vec![d, h]));
            arrays.push(ParamArray::zeros(format!("{n}.head.var.b"), vec![d]));
            arrays.push(ParamArray::zeros(format!("{n}.head.step.w"), vec![1, h]));
            arrays.push(ParamArray::zeros(format!("{n}.head.step.b"), vec![1]));
        }
        arrays.push(ParamArray::zeros("shared.lstm.w_x", vec![4 * s, config.lower_total()]));
        arrays.push(ParamArray::zeros("shared.lstm.w_h", vec![4 * s, s]));
        arrays.push(ParamArray::zeros("shared.lstm.b", vec![4 * s]));
        Ok(ModelParams { config: config.clone(), set: ParamSet::new(arrays)? })
    }

    pub fn from_set(config: &ModelConfig, set: ParamSet) -> Result<Self> {
        let expected = Self::zeros(config)?;
        let bad = expected.set.layout_mismatches(&set);
        if !bad.is_empty() {
            return Err(Error::DimensionMismatch(format!("parameter layout mismatch: {}", bad.join(", "))));
        }
        Ok(ModelParams { config: config.clone(), set })
    }

    #[inline]
    pub(crate) fn lower(&self, m: usize, which: usize) -> &[f64] {
        &self.set.arrays[m * PER_MODALITY + which].values
    }

    #[inline]
    pub(crate) fn shared(&self, which: usize) -> &[f64] {
        &self.set.arrays[self.config.modalities.len() * PER_MODALITY + which].values
    }

    #[inline]
    pub(crate) fn lower_index(m: usize, which: usize) -> usize {
        m * PER_MODALITY + which
    }

    #[inline]
    pub(crate) fn shared_index(&self, which: usize) -> usize {
        self.config.modalities.len() * PER_MODALITY + which
    }

    /// Names of the LSTM bias arrays (their forget-gate block starts at 1.0).
    pub fn lstm_bias_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.config.modalities.iter().map(|m| format!("{}.lstm.b", m.name)).collect();
        v.push("shared.lstm.b".into());
        v
    }
}

/// Uniform `±1/√fan_in` weights, zero biases, forget-gate biases at 1.0.
pub fn init_params(config: &ModelConfig, rng: &mut RngStream) -> Result<ModelParams> {
    let mut p = ModelParams::zeros(config)?;
    for arr in &mut p.set.arrays {
        if arr.shape.len() == 2 && !arr.name.ends_with(".b") {
            let bound = 1.0 / (arr.cols() as f64).sqrt();
            for v in &mut arr.values {
                *v = rng.uniform(-bound, bound);
            }
        }
    }
    let bias_names = p.lstm_bias_names();
    for name in bias_names {
        let arr = p.set.get_mut(&name).expect("bias array present");
        let hid = arr.len() / 4;
        arr.values[hid..2 * hid].iter_mut().for_each(|v| *v = 1.0);
    }
    Ok(p)
}

/// Hidden and cell vector of one LSTM layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LayerState {
    pub fn zeros(n: usize) -> Self {
        LayerState { h: vec![0.0; n], c: vec![0.0; n] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub lower: Vec<LayerState>,
    pub shared: LayerState,
}

impl HiddenState {
    pub fn zeros(config: &ModelConfig) -> Self {
        HiddenState {
            lower: config.modalities.iter().map(|m| LayerState::zeros(m.lower_hidden)).collect(),
            shared: LayerState::zeros(config.shared_hidden),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.lower
            .iter()
            .chain(std::iter::once(&self.shared))
            .all(|l| l.h.iter().chain(&l.c).all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalityOutput {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionOutput {
    pub modalities: Vec<ModalityOutput>,
}

impl PredictionOutput {
    pub fn means(&self) -> Frame {
        self.modalities.iter().map(|m| m.mean.clone()).collect()
    }

    /// Mean of every variance entry across all modalities.
    pub fn mean_variance(&self) -> f64 {
        let (s, n) = self
            .modalities
            .iter()
            .fold((0.0, 0usize), |(s, n), m| (s + m.variance.iter().sum::<f64>(), n + m.variance.len()));
        s / n.max(1) as f64
    }

    pub fn total_variance(&self) -> f64 {
        self.modalities.iter().flat_map(|m| m.variance.iter()).sum()
    }
}

/// Largest per-modality step value, rounded half-up and clamped to `[1, t_max]`.
pub fn effective_horizon(output: &PredictionOutput, t_max: usize) -> usize {
    let m = output.modalities.iter().map(|m| m.step).fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return t_max.max(1);
    }
    let r = (m + 0.5).floor();
    (r.max(1.0) as usize).min(t_max.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn out_with_steps(steps: &[f64]) -> PredictionOutput {
        PredictionOutput {
            modalities: steps.iter().map(|&s| ModalityOutput { mean: vec![0.0], variance: vec![1.0], step: s }).collect(),
        }
    }

    #[test]
    fn horizon_rounding() {
        assert_eq!(effective_horizon(&out_with_steps(&[3.2, 7.8]), 10), 8);
        assert_eq!(effective_horizon(&out_with_steps(&[1.0, 1.0]), 10), 1);
        assert_eq!(effective_horizon(&out_with_steps(&[10.0, 2.0]), 10), 10);
        assert_eq!(effective_horizon(&out_with_steps(&[2.5]), 10), 3);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = ModelConfig::default();
        let a = init_params(&cfg, &mut RngStream::new(7)).unwrap();
        let b = init_params(&cfg, &mut RngStream::new(7)).unwrap();
        assert_eq!(a, b);
        for name in a.lstm_bias_names() {
            let arr = a.set.get(&name).unwrap();
            let h = arr.len() / 4;
            assert!(arr.values[h..2 * h].iter().all(|&v| v == 1.0));
            assert!(arr.values[..h].iter().chain(&arr.values[2 * h..]).all(|&v| v == 0.0));
        }
        for arr in &a.set.arrays {
            if arr.name.ends_with(".b") {
                continue;
            }
            let bound = 1.0 / (arr.cols() as f64).sqrt();
            assert!(arr.values.iter().all(|v| v.abs() <= bound), "{}", arr.name);
        }
    }

    #[test]
    fn fan_in_hundred_bound() {
        let cfg = ModelConfig {
            modalities: vec![ModalitySpec { name: "x".into(), dim: 100, lower_hidden: 3 }],
            shared_hidden: 2,
            ..ModelConfig::default()
        };
        let p = init_params(&cfg, &mut RngStream::new(1)).unwrap();
        let w = p.set.get("x.lstm.w_x").unwrap();
        assert_eq!(w.cols(), 100);
        assert!(w.values.iter().all(|v| v.abs() <= 0.1));
    }

    #[test]
    fn from_set_lists_offending_arrays() {
        let small = ModelConfig {
            modalities: vec![ModalitySpec { name: "joint".into(), dim: 2, lower_hidden: 4 }],
            shared_hidden: 6,
            ..ModelConfig::default()
        };
        let big = ModelConfig { shared_hidden: 7, ..small.clone() };
        let p = ModelParams::zeros(&small).unwrap();
        let err = ModelParams::from_set(&big, p.set).unwrap_err().to_string();
        assert!(err.contains("joint.lstm.w_fb") && err.contains("shared.lstm.w_h"), "{err}");
    }
}
