//! Deterministic numeric substrate shared by the model, trainer and analysis code.

pub mod adam;
pub mod gradcheck;
pub mod linalg;
pub mod lstm;
pub mod nll;
pub mod params;
pub mod pca;
pub mod rng;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{finite_diff_gradcheck, relative_error, GradcheckReport, RELATIVE_ERROR_FLOOR};
pub use lstm::{lstm_cell_step, LstmWeights};
pub use nll::{gaussian_nll, GaussianPrediction, VARIANCE_FLOOR};
pub use params::{ParamArray, ParamSet};
pub use pca::{pca_fit, Pca};
pub use rng::{sample_gaussian, RngStream};
