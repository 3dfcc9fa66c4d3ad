//! Datasets, the teacher-forced training loss for the three model variants,
//! the training loop and checkpoints.

mod checkpoint;
mod config;
mod dataset;
mod gradcheck;
mod loss;
mod train;

pub use checkpoint::{checkpoint_paths, load_checkpoint, load_checkpoint_for, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use config::{TrainingConfig, Variant};
pub use dataset::{load_dataset, save_dataset, Dataset, Manifest, ModalityBounds, Normalizer, Trajectory, TrajectoryEntry, MANIFEST_FILE};
pub use loss::{apply_variant_hook, replay_loss, sequence_loss, sequence_loss_from, HookOutcome, SequenceLoss, SequenceTrace, StepTrace};
pub use train::{checkpoint_name, model_config_for, train, EpochMetrics, MetricsLog, TrainOutcome, TrainOutput};
pub use gradcheck::{gradcheck_variant, tiny_model_config, GradcheckSetup};
