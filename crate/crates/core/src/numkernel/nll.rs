use crate::error::{Error, Result};

/// Smallest variance any head may emit.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Diagonal Gaussian over a modality's next observation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

fn check(mean: &[f64], var: &[f64], target: &[f64]) -> Result<()> {
    if mean.len() != var.len() || mean.len() != target.len() {
        return Err(Error::DimensionMismatch(format!(
            "gaussian_nll: mean {}, variance {}, target {}",
            mean.len(),
            var.len(),
            target.len()
        )));
    }
    if let Some((index, &value)) = var.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositiveVariance { index, value });
    }
    Ok(())
}

/// `Σᵢ (tᵢ − μᵢ)² / (2σᵢ²) + ln(2π σᵢ²) / 2`, minimized during training.
pub fn gaussian_nll(pred: &GaussianPrediction, target: &[f64]) -> Result<f64> {
    gaussian_nll_slices(&pred.mean, &pred.variance, target)
}

pub fn gaussian_nll_slices(mean: &[f64], var: &[f64], target: &[f64]) -> Result<f64> {
    check(mean, var, target)?;
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    Ok(mean
        .iter()
        .zip(var)
        .zip(target)
        .map(|((m, v), t)| (t - m).powi(2) / (2.0 * v) + 0.5 * (ln_2pi + v.ln()))
        .sum())
}

/// Loss plus its partials with respect to mean and variance.
pub fn gaussian_nll_grad(mean: &[f64], var: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let loss = gaussian_nll_slices(mean, var, target)?;
    let mut d_mean = Vec::with_capacity(mean.len());
    let mut d_var = Vec::with_capacity(mean.len());
    for ((m, v), t) in mean.iter().zip(var).zip(target) {
        let r = m - t;
        d_mean.push(r / v);
        d_var.push(0.5 / v - r * r / (2.0 * v * v));
    }
    Ok((loss, d_mean, d_var))
}
