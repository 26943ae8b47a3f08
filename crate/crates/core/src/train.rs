//! The training loop: random ray batches, render, loss, reverse pass, Adam.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::{adam_step, AdamConfig, AdamState};
use crate::camera::Ray;
use crate::dataset::Dataset;
use crate::encoding::PositionalEncodingConfig;
use crate::error::{Error, Result};
use crate::field::{DensityAnisotropy, FieldConfig, FieldParams, FieldVariant, RadianceField};
use crate::loss::{LossReport, DEFAULT_LAMBDA};
use crate::pipeline::{dataset_rays, draw_samples, loss_and_gradients};
use crate::real::Real;
use crate::render::SamplingMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// SH degree `L`.
    pub degree: usize,
    pub lambda: f64,
    /// Latent width `K`.
    pub latent_width: usize,
    pub variant: FieldVariant,
    pub density_anisotropy: DensityAnisotropy,
    pub geometry_hidden: Vec<usize>,
    pub color_hidden: Vec<usize>,
    pub encoding: PositionalEncodingConfig,
    pub learning_rate: f64,
    /// Learning rate reached at the last iteration, by exponential decay.
    pub learning_rate_final: f64,
    pub batch_rays: usize,
    pub samples_per_ray: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Bin centers instead of stratified jitter.
    pub deterministic_sampling: bool,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let field = FieldConfig::default();
        Self {
            degree: 3,
            lambda: DEFAULT_LAMBDA,
            latent_width: field.latent_width,
            variant: FieldVariant::Full,
            density_anisotropy: field.density_anisotropy,
            geometry_hidden: field.geometry_hidden,
            color_hidden: field.color_hidden,
            encoding: field.encoding,
            learning_rate: 5e-4,
            learning_rate_final: 5e-5,
            batch_rays: 1024,
            samples_per_ray: 64,
            iterations: 20_000,
            seed: 0,
            deterministic_sampling: false,
            log_every: 500,
        }
    }
}

impl TrainConfig {
    pub fn field_config(&self) -> FieldConfig {
        FieldConfig {
            density_degree: self.degree,
            latent_degree: self.degree,
            latent_width: self.latent_width,
            geometry_hidden: self.geometry_hidden.clone(),
            color_hidden: self.color_hidden.clone(),
            encoding: self.encoding.clone(),
            density_anisotropy: self.density_anisotropy,
        }
        .with_variant(self.variant)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.batch_rays == 0 {
            return Err(Error::Config("batch_rays must be >= 1".into()));
        }
        if self.samples_per_ray == 0 {
            return Err(Error::Config("samples_per_ray must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.learning_rate_final > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        self.field_config().validate()
    }

    /// Exponential decay from `learning_rate` to `learning_rate_final`.
    pub fn learning_rate_at(&self, iteration: usize) -> f64 {
        let frac = iteration as f64 / self.iterations.max(1) as f64;
        self.learning_rate * (self.learning_rate_final / self.learning_rate).powf(frac)
    }

    pub fn sampling_mode(&self) -> SamplingMode {
        if self.deterministic_sampling {
            SamplingMode::BinCenters
        } else {
            SamplingMode::Stratified
        }
    }
}

/// Every training pixel as a ray and target color.
#[derive(Debug, Clone)]
pub struct TrainingRays<T> {
    pub rays: Vec<Option<Ray>>,
    pub targets: Vec<[T; 3]>,
    pub background: [f64; 3],
}

impl<T: Real> TrainingRays<T> {
    pub fn from_dataset(dataset: &Dataset) -> Result<Self> {
        dataset.validate()?;
        let (rays, targets) = dataset_rays(dataset)?;
        Ok(Self {
            rays,
            targets,
            background: dataset.background,
        })
    }

    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: FieldParams<T>,
    pub trace: Vec<LossReport>,
}

/// A failed run keeps the last parameters that produced a finite loss.
#[derive(Debug)]
pub struct TrainFailure<T> {
    pub error: Error,
    pub iteration: usize,
    pub last_good: FieldParams<T>,
    pub trace: Vec<LossReport>,
}

impl<T> From<TrainFailure<T>> for Error {
    fn from(f: TrainFailure<T>) -> Self {
        f.error
    }
}

pub fn train<T: Real>(
    config: &TrainConfig,
    data: &TrainingRays<T>,
    params: FieldParams<T>,
) -> std::result::Result<TrainOutcome<T>, TrainFailure<T>> {
    train_with_callback(config, data, params, |_, _| {})
}

/// Trains in place of [`train`], calling `on_step(iteration, report)` after
/// every step.
pub fn train_with_callback<T: Real>(
    config: &TrainConfig,
    data: &TrainingRays<T>,
    params: FieldParams<T>,
    mut on_step: impl FnMut(usize, &LossReport),
) -> std::result::Result<TrainOutcome<T>, TrainFailure<T>> {
    let fail = |error: Error, iteration: usize, last_good: FieldParams<T>, trace: Vec<LossReport>| TrainFailure {
        error,
        iteration,
        last_good,
        trace,
    };
    if let Err(e) = config.validate() {
        return Err(fail(e, 0, params, Vec::new()));
    }
    if data.is_empty() {
        return Err(fail(Error::Input("training set has no rays".into()), 0, params, Vec::new()));
    }
    let field_config = config.field_config();
    let mut field = match RadianceField::from_parts(field_config, params) {
        Ok(f) => f,
        Err(e) => {
            return Err(TrainFailure {
                error: e,
                iteration: 0,
                last_good: FieldParams::zeros(&config.field_config()),
                trace: Vec::new(),
            })
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(&field.params, AdamConfig::default());
    let mut trace = Vec::with_capacity(config.iterations);
    let mode = config.sampling_mode();
    let batch = config.batch_rays;

    for it in 0..config.iterations {
        let idx: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..data.len())).collect();
        let rays: Vec<Option<Ray>> = idx.iter().map(|&i| data.rays[i]).collect();
        let targets: Vec<[T; 3]> = idx.iter().map(|&i| data.targets[i]).collect();
        let samples = draw_samples(&rays, config.samples_per_ray, mode, &mut rng);

        let out = match loss_and_gradients(&field, &rays, &samples, &targets, data.background, config.lambda) {
            Ok(o) => o,
            Err(e) => return Err(fail(e, it, field.params, trace)),
        };
        let report = out.report.expect("loss requested");
        if !report.total.is_finite() {
            let e = Error::Diverged {
                iteration: it,
                reason: format!("total loss is {}", report.total),
            };
            return Err(fail(e, it, field.params, trace));
        }
        let grads = out.grads.expect("gradients requested");
        let before = field.params.clone();
        if let Err(e) = adam_step(&mut field.params, &grads, &mut adam, config.learning_rate_at(it)) {
            return Err(fail(e, it, before, trace));
        }
        if !field.params.all_finite() {
            let e = Error::Diverged {
                iteration: it,
                reason: "parameters became non-finite".into(),
            };
            return Err(fail(e, it, before, trace));
        }
        if config.log_every > 0 && (it % config.log_every == 0 || it + 1 == config.iterations) {
            log::info!(
                "iter {it:>6}  recon {:.6}  aniso {:.4}  total {:.6}  psnr {:.2}",
                report.recon,
                report.aniso,
                report.total,
                report.psnr_train
            );
        }
        on_step(it, &report);
        trace.push(report);
    }
    Ok(TrainOutcome {
        params: field.params,
        trace,
    })
}

/// Writes `iteration,recon,aniso,total,psnr_train` rows.
pub fn write_loss_trace(path: &Path, trace: &[LossReport]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "iteration,recon,aniso,total,psnr_train").map_err(io)?;
    for (i, r) in trace.iter().enumerate() {
        writeln!(w, "{i},{:e},{:e},{:e},{}", r.recon, r.aniso, r.total, r.psnr_train).map_err(io)?;
    }
    w.flush().map_err(io)
}
