use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::checkpoint::{save_checkpoint, Checkpoint};
use super::dataset::Dataset;
use super::loss::{sequence_loss, SequenceLoss};
use super::TrainingConfig;
use crate::error::{Error, Result};
use crate::numkernel::{adam_step, AdamState, RngStream};
use crate::shlstm::{init_params, ModelConfig, ModelParams};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean per-step loss over all sequences of the epoch.
    pub loss_total: f64,
    pub loss_modalities: Vec<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsLog {
    pub modality_names: Vec<String>,
    pub epochs: Vec<EpochMetrics>,
    pub checkpoints: Vec<(usize, PathBuf)>,
}

impl MetricsLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss_total");
        for n in &self.modality_names {
            let _ = write!(out, ",loss_{n}");
        }
        out.push_str(",seconds\n");
        for e in &self.epochs {
            let _ = write!(out, "{},{}", e.epoch, e.loss_total);
            for l in &e.loss_modalities {
                let _ = write!(out, ",{l}");
            }
            let _ = writeln!(out, ",{}", e.seconds);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub adam: AdamState,
    pub metrics: MetricsLog,
}

/// Where training artifacts go. `None` keeps everything in memory.
#[derive(Debug, Clone, Default)]
pub struct TrainOutput {
    pub checkpoint_dir: Option<PathBuf>,
    pub metrics_csv: Option<PathBuf>,
}

pub fn checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:05}")
}

/// Model layout for a dataset: one modality per manifest entry.
pub fn model_config_for(cfg: &TrainingConfig, dataset: &Dataset) -> ModelConfig {
    let mut model = cfg.model.clone();
    let hidden = model.modalities.first().map(|m| m.lower_hidden).unwrap_or(50);
    model.modalities = dataset
        .normalizer
        .modalities
        .iter()
        .map(|b| {
            let lower_hidden = cfg.model.modalities.iter().find(|m| m.name == b.name).map(|m| m.lower_hidden).unwrap_or(hidden);
            crate::shlstm::ModalitySpec { name: b.name.clone(), dim: b.dim, lower_hidden }
        })
        .collect();
    model
}

fn batch_losses(cfg: &TrainingConfig, dataset: &Dataset, params: &ModelParams, batch: &[usize], rngs: &[RngStream], jobs: usize) -> Result<Vec<SequenceLoss>> {
    let variant = cfg.effective_variant();
    let one = |k: usize| sequence_loss(&dataset.trajectories[batch[k]].frames, params, variant, &cfg.foresight, &rngs[k]);
    if jobs <= 1 || batch.len() == 1 {
        return (0..batch.len()).map(one).collect();
    }
    let mut results: Vec<Option<Result<SequenceLoss>>> = (0..batch.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        for (w, chunk) in results.chunks_mut(batch.len().div_ceil(jobs)).enumerate() {
            let base = w * batch.len().div_ceil(jobs);
            let one = &one;
            s.spawn(move || {
                for (i, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(one(base + i));
                }
            });
        }
    });
    results.into_iter().map(|r| r.expect("every slot filled")).collect()
}

/// Minibatch Adam over shuffled whole sequences. Fully determined by
/// `(cfg, dataset)`; `jobs` only changes how sequences of a batch are scheduled.
pub fn train(cfg: &TrainingConfig, dataset: &Dataset, output: &TrainOutput, jobs: usize, mut on_epoch: impl FnMut(&EpochMetrics)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = dataset.trajectories.len();
    if cfg.batch_size > n {
        return Err(Error::Config(format!("batch_size {} exceeds dataset size {n}", cfg.batch_size)));
    }
    let model = model_config_for(cfg, dataset);
    let root = RngStream::new(cfg.seed);
    let mut params = init_params(&model, &mut root.split(0))?;
    let mut adam = AdamState::new(&params.set);
    let adam_cfg = cfg.adam();
    let mut metrics = MetricsLog { modality_names: model.modalities.iter().map(|m| m.name.clone()).collect(), ..Default::default() };
    if let Some(dir) = &output.checkpoint_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..n).collect();
        root.split(1).split(epoch as u64).shuffle(&mut order);
        let epoch_rng = root.split(2).split(epoch as u64);

        let mut sum_total = 0.0;
        let mut sum_mod = vec![0.0; model.modalities.len()];
        let mut steps = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let rngs: Vec<RngStream> = batch.iter().map(|&i| epoch_rng.split(i as u64)).collect();
            let results = batch_losses(cfg, dataset, &params, batch, &rngs, jobs)?;
            let mut grads = params.set.zeros_like();
            for r in &results {
                grads.add_scaled(r.grads.as_ref().expect("live loss has gradients"), 1.0 / batch.len() as f64);
                sum_total += r.loss;
                sum_mod.iter_mut().zip(&r.nll).for_each(|(a, b)| *a += b);
                steps += r.steps;
            }
            grads.clip_global_norm(cfg.clip_norm);
            adam_step(&mut params.set, &grads, &mut adam, &adam_cfg)?;
        }

        let m = EpochMetrics {
            epoch,
            loss_total: sum_total / steps as f64,
            loss_modalities: sum_mod.iter().map(|s| s / steps as f64).collect(),
            seconds: if cfg.record_wall_time { started.elapsed().as_secs_f64() } else { 0.0 },
        };
        on_epoch(&m);
        metrics.epochs.push(m);

        if let Some(dir) = &output.checkpoint_dir {
            if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
                let path = dir.join(checkpoint_name(epoch));
                let ckpt = Checkpoint {
                    epoch,
                    params: params.clone(),
                    adam: Some(adam.clone()),
                    training: Some(cfg.clone()),
                    normalizer: Some(dataset.normalizer.clone()),
                };
                save_checkpoint(&path, &ckpt).map_err(|e| partial(e, epoch, &metrics))?;
                metrics.checkpoints.push((epoch, path.with_extension("json")));
            }
        }
        if let Some(p) = &output.metrics_csv {
            metrics.write_csv(p).map_err(|e| partial(e, epoch, &metrics))?;
        }
    }
    Ok(TrainOutcome { params, adam, metrics })
}

fn partial(e: Error, epoch: usize, metrics: &MetricsLog) -> Error {
    let last = metrics.checkpoints.last().map(|(e, _)| format!("epoch {e}")).unwrap_or_else(|| "none".into());
    match e {
        Error::Io { path, source } => Error::Io {
            path,
            source: std::io::Error::new(source.kind(), format!("{source} (training aborted at epoch {epoch}; last complete checkpoint: {last})")),
        },
        other => other,
    }
}
