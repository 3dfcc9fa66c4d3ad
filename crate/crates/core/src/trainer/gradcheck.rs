use super::loss::{replay_loss, sequence_loss_from};
use super::Variant;
use crate::error::Result;
use crate::foresight::ForesightConfig;
use crate::numkernel::{finite_diff_gradcheck, GradcheckReport, RngStream};
use crate::shlstm::{init_params, Frame, HiddenState, ModalitySpec, ModelConfig, ModelParams, StepMode};

/// Two 2-dim modalities, 4+4 lower units, 6 shared units. Proxy step mode
/// so the step heads carry gradient too.
pub fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        modalities: vec![
            ModalitySpec { name: "joint".into(), dim: 2, lower_hidden: 4 },
            ModalitySpec { name: "feat".into(), dim: 2, lower_hidden: 4 },
        ],
        shared_hidden: 6,
        step_mode: StepMode::Proxy,
        ..ModelConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckSetup {
    pub variant: Variant,
    pub seed: u64,
    pub model: ModelConfig,
    pub foresight: ForesightConfig,
    /// Prediction steps (the sequence has one more frame).
    pub steps: usize,
    pub epsilon: f64,
    /// Multiplies the analytic gradient before comparison; anything but 1
    /// must fail (negative control).
    pub gradient_scale: f64,
}

impl GradcheckSetup {
    pub fn tiny(variant: Variant, seed: u64) -> Self {
        GradcheckSetup {
            variant,
            seed,
            model: tiny_model_config(),
            foresight: ForesightConfig::default(),
            steps: 5,
            epsilon: 1e-4,
            gradient_scale: 1.0,
        }
    }
}

/// Checks BPTT gradients of one variant against central differences of the
/// same loss with its perturbations frozen.
///
/// The sequence starts from a random non-zero hidden state: from a zero start
/// several shared-layer gradients are so small that finite-difference
/// rounding dominates the comparison.
pub fn gradcheck_variant(setup: &GradcheckSetup) -> Result<GradcheckReport> {
    let root = RngStream::new(setup.seed);
    let params = init_params(&setup.model, &mut root.split(0))?;
    let mut frame_rng = root.split(1);
    let frames: Vec<Frame> = (0..=setup.steps)
        .map(|_| setup.model.modalities.iter().map(|m| (0..m.dim).map(|_| frame_rng.uniform(-0.8, 0.8)).collect()).collect())
        .collect();
    let mut state_rng = root.split(2);
    let mut initial = HiddenState::zeros(&setup.model);
    for l in initial.lower.iter_mut().chain(std::iter::once(&mut initial.shared)) {
        l.h.iter_mut().for_each(|v| *v = state_rng.uniform(-0.5, 0.5));
        l.c.iter_mut().for_each(|v| *v = state_rng.uniform(-0.5, 0.5));
    }

    let live = sequence_loss_from(&frames, &params, setup.variant, &setup.foresight, &root.split(3), &initial)?;
    let mut grads = live.grads.expect("live loss has gradients");
    grads.scale(setup.gradient_scale);
    let trace = live.trace;
    let config = params.config.clone();
    let report = finite_diff_gradcheck(
        |set| {
            let p = ModelParams { config: config.clone(), set: set.clone() };
            replay_loss(&frames, &p, &trace, &initial, false).map(|l| l.loss).unwrap_or(f64::NAN)
        },
        &params.set,
        &grads,
        setup.epsilon,
        &mut root.split(4),
    );
    Ok(report)
}
