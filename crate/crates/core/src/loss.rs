//! Reconstruction loss, anisotropy regularizer and their weighted sum.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Default weight of the anisotropy regularizer.
pub const DEFAULT_LAMBDA: f64 = 1e-4;

/// Loss components for one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub recon: f64,
    pub aniso: f64,
    pub total: f64,
    /// PSNR implied by `recon`, in dB.
    pub psnr_train: f64,
}

impl LossReport {
    pub fn new(recon: f64, aniso: f64, lambda: f64) -> Self {
        Self {
            recon,
            aniso,
            total: total_loss(recon, aniso, lambda),
            psnr_train: psnr_from_recon(recon),
        }
    }
}

/// Mean over rays of the squared Euclidean RGB error.
pub fn recon_loss<T: Real>(predicted: &[[T; 3]], target: &[[T; 3]]) -> Result<T> {
    check_batches(predicted, target)?;
    if predicted.is_empty() {
        return Ok(T::zero());
    }
    let sum: T = predicted
        .iter()
        .zip(target)
        .map(|(p, t)| (0..3).map(|c| (p[c] - t[c]) * (p[c] - t[c])).sum::<T>())
        .sum();
    Ok(sum / T::of(predicted.len() as f64))
}

/// Gradient of [`recon_loss`] with respect to each predicted color.
pub fn recon_loss_grad<T: Real>(predicted: &[[T; 3]], target: &[[T; 3]]) -> Result<Vec<[T; 3]>> {
    check_batches(predicted, target)?;
    let scale = T::of(2.0 / predicted.len().max(1) as f64);
    Ok(predicted
        .iter()
        .zip(target)
        .map(|(p, t)| [0, 1, 2].map(|c| scale * (p[c] - t[c])))
        .collect())
}

fn check_batches<T>(predicted: &[[T; 3]], target: &[[T; 3]]) -> Result<()> {
    if predicted.len() != target.len() {
        return Err(Error::Usage(format!(
            "{} predicted colors but {} targets",
            predicted.len(),
            target.len()
        )));
    }
    Ok(())
}

/// Mean over samples of `sigma_aniso^2 + |e_aniso|^2`.
pub fn aniso_loss<T: Real>(sigma_aniso: ArrayView1<T>, latent_aniso: ArrayView2<T>) -> Result<T> {
    let n = sigma_aniso.len();
    if latent_aniso.nrows() != n {
        return Err(Error::Usage(format!(
            "{n} density samples but {} latent samples",
            latent_aniso.nrows()
        )));
    }
    if n == 0 {
        return Ok(T::zero());
    }
    let energy = sigma_aniso.iter().map(|&v| v * v).sum::<T>() + latent_aniso.iter().map(|&v| v * v).sum::<T>();
    Ok(energy / T::of(n as f64))
}

/// Gradients of `weight * aniso_loss` with respect to both inputs.
/// `total_samples` is the sample count the loss is averaged over.
pub fn aniso_loss_grad<T: Real>(
    sigma_aniso: ArrayView1<T>,
    latent_aniso: ArrayView2<T>,
    total_samples: usize,
    weight: T,
) -> (Array1<T>, Array2<T>) {
    let scale = weight * T::of(2.0 / total_samples.max(1) as f64);
    (sigma_aniso.mapv(|v| v * scale), latent_aniso.mapv(|v| v * scale))
}

pub fn total_loss(recon: f64, aniso: f64, lambda: f64) -> f64 {
    recon + lambda * aniso
}

/// PSNR of a per-ray summed squared error: the per-channel MSE is `recon / 3`.
pub fn psnr_from_recon(recon: f64) -> f64 {
    -10.0 * (recon / 3.0).log10()
}
