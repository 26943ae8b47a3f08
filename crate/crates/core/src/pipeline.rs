//! Rendering a neural field along batches of rays, with the loss and its
//! parameter gradient.
//!
//! Rays are split into fixed-size chunks that are processed in parallel and
//! reduced in chunk order, so results do not depend on the thread count.

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;

use crate::camera::{Camera, Ray};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::field::{FieldInputs, FieldParams, FieldUpstream, RadianceField};
use crate::image_io::Image;
use crate::loss::LossReport;
use crate::real::Real;
use crate::render::{composite, render_ray_backward, sample_stratified, RenderResult, SampleSet, SamplingMode};
use crate::sh::Direction;

/// Rays per work unit.
pub const RAY_CHUNK: usize = 64;

/// Draws sample distances for every ray; rays that miss the scene get none.
pub fn draw_samples(rays: &[Option<Ray>], n: usize, mode: SamplingMode, rng: &mut impl Rng) -> Vec<SampleSet> {
    rays.iter()
        .map(|r| match r {
            Some(r) => sample_stratified(r, n, mode, rng),
            None => SampleSet {
                t: Vec::new(),
                delta: Vec::new(),
            },
        })
        .collect()
}

/// Result of a batch forward (and optionally reverse) pass.
#[derive(Debug, Clone)]
pub struct BatchOutput<T> {
    pub renders: Vec<RenderResult<T>>,
    pub report: Option<LossReport>,
    pub grads: Option<FieldParams<T>>,
}

impl<T: Real> BatchOutput<T> {
    pub fn rgb(&self) -> Vec<[T; 3]> {
        self.renders.iter().map(|r| r.rgb).collect()
    }
}

struct ChunkOut<T> {
    renders: Vec<RenderResult<T>>,
    recon_sum: f64,
    aniso_sum: f64,
    grads: Option<FieldParams<T>>,
}

struct LossScales {
    recon: f64,
    aniso: f64,
}

#[allow(clippy::too_many_arguments)]
fn process_chunk<T: Real>(
    field: &RadianceField<T>,
    first_ray: usize,
    rays: &[Option<Ray>],
    samples: &[SampleSet],
    targets: Option<&[[T; 3]]>,
    background: [T; 3],
    scales: Option<&LossScales>,
) -> Result<ChunkOut<T>> {
    let mut positions = Vec::new();
    let mut ray_of = Vec::new();
    let mut directions: Vec<Direction> = Vec::new();
    let mut offsets = Vec::with_capacity(rays.len() + 1);
    for (r, s) in rays.iter().zip(samples) {
        offsets.push(positions.len());
        if let Some(r) = r {
            if !s.is_empty() {
                for &t in &s.t {
                    positions.push(r.at(t).map(T::of));
                    ray_of.push(directions.len());
                }
                directions.push(r.direction);
            }
        } else if !s.is_empty() {
            return Err(Error::Usage("samples given for a ray that misses the scene".into()));
        }
    }
    offsets.push(positions.len());

    let p = positions.len();
    let forward = if p > 0 {
        let inputs = FieldInputs::from_rays(&field.config, &positions, &directions, |i| ray_of[i])?;
        Some(field.forward(&inputs)?)
    } else {
        None
    };

    let kw = field.config.latent_width;
    let mut upstream = scales.map(|_| FieldUpstream::zeros(p, kw));
    let mut renders = Vec::with_capacity(rays.len());
    let mut recon_sum = 0.0;
    for (j, s) in samples.iter().enumerate() {
        let (a, b) = (offsets[j], offsets[j + 1]);
        let (sigma, color): (Vec<T>, Vec<[T; 3]>) = match &forward {
            Some((out, _)) => (
                out.sigma.slice(ndarray::s![a..b]).to_vec(),
                (a..b)
                    .map(|i| [out.rgb[[i, 0]], out.rgb[[i, 1]], out.rgb[[i, 2]]])
                    .collect(),
            ),
            None => (Vec::new(), Vec::new()),
        };
        let delta: Vec<T> = s.delta.iter().map(|&d| T::of(d)).collect();
        let res = composite(&sigma, &color, &delta, background, first_ray + j)?;
        if let (Some(targets), Some(scales), Some(up)) = (targets, scales, upstream.as_mut()) {
            let t = targets[j];
            let diff = [0, 1, 2].map(|c| res.rgb[c] - t[c]);
            recon_sum += diff.iter().map(|d| d.f64() * d.f64()).sum::<f64>();
            let d_rgb = diff.map(|d| d * T::of(scales.recon));
            let g = render_ray_backward(&res.cache, d_rgb, T::zero())?;
            for (k, i) in (a..b).enumerate() {
                up.d_sigma[i] = g.d_sigma[k];
                for c in 0..3 {
                    up.d_rgb[[i, c]] = g.d_color[k][c];
                }
            }
        }
        renders.push(res);
    }

    let mut aniso_sum = 0.0;
    let grads = match (scales, upstream, &forward) {
        (Some(scales), Some(mut up), Some((out, cache))) => {
            aniso_sum = out.sigma_aniso.iter().map(|v| v.f64() * v.f64()).sum::<f64>()
                + out.latent_aniso.iter().map(|v| v.f64() * v.f64()).sum::<f64>();
            let w = T::of(scales.aniso);
            up.d_sigma_aniso = out.sigma_aniso.mapv(|v| v * w);
            up.d_latent_aniso = out.latent_aniso.mapv(|v| v * w);
            let mut grads = field.params.zeros_like();
            field.backward(cache, &up, &mut grads)?;
            Some(grads)
        }
        (Some(_), _, _) => Some(field.params.zeros_like()),
        _ => None,
    };
    Ok(ChunkOut {
        renders,
        recon_sum,
        aniso_sum,
        grads,
    })
}

fn check_lengths(rays: usize, samples: usize) -> Result<()> {
    if rays != samples {
        return Err(Error::Usage(format!("{rays} rays but {samples} sample sets")));
    }
    Ok(())
}

/// Forward pass only.
pub fn render_batch<T: Real>(
    field: &RadianceField<T>,
    rays: &[Option<Ray>],
    samples: &[SampleSet],
    background: [f64; 3],
) -> Result<Vec<RenderResult<T>>> {
    check_lengths(rays.len(), samples.len())?;
    let bg = background.map(T::of);
    let chunks: Vec<ChunkOut<T>> = rays
        .par_chunks(RAY_CHUNK)
        .zip(samples.par_chunks(RAY_CHUNK))
        .enumerate()
        .map(|(c, (r, s))| process_chunk(field, c * RAY_CHUNK, r, s, None, bg, None))
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flat_map(|c| c.renders).collect())
}

/// Forward and reverse pass of `recon + lambda * aniso` over a ray batch.
/// The reconstruction term is averaged over rays, the anisotropy term over
/// all samples in the batch.
pub fn loss_and_gradients<T: Real>(
    field: &RadianceField<T>,
    rays: &[Option<Ray>],
    samples: &[SampleSet],
    targets: &[[T; 3]],
    background: [f64; 3],
    lambda: f64,
) -> Result<BatchOutput<T>> {
    check_lengths(rays.len(), samples.len())?;
    if targets.len() != rays.len() {
        return Err(Error::Usage(format!(
            "{} rays but {} target colors",
            rays.len(),
            targets.len()
        )));
    }
    let total_samples: usize = samples.iter().map(SampleSet::len).sum();
    let scales = LossScales {
        recon: 2.0 / rays.len().max(1) as f64,
        aniso: 2.0 * lambda / total_samples.max(1) as f64,
    };
    let bg = background.map(T::of);
    let chunks: Vec<ChunkOut<T>> = rays
        .par_chunks(RAY_CHUNK)
        .zip(samples.par_chunks(RAY_CHUNK))
        .zip(targets.par_chunks(RAY_CHUNK))
        .enumerate()
        .map(|(c, ((r, s), t))| process_chunk(field, c * RAY_CHUNK, r, s, Some(t), bg, Some(&scales)))
        .collect::<Result<_>>()?;

    let mut grads = field.params.zeros_like();
    let (mut recon, mut aniso) = (0.0, 0.0);
    let mut renders = Vec::with_capacity(rays.len());
    for c in chunks {
        recon += c.recon_sum;
        aniso += c.aniso_sum;
        if let Some(g) = &c.grads {
            grads.add_assign(g);
        }
        renders.extend(c.renders);
    }
    let recon = recon / rays.len().max(1) as f64;
    let aniso = if total_samples > 0 { aniso / total_samples as f64 } else { 0.0 };
    Ok(BatchOutput {
        renders,
        report: Some(LossReport::new(recon, aniso, lambda)),
        grads: Some(grads),
    })
}

/// Renders a full image with bin-center samples.
pub fn render_image<T: Real>(
    field: &RadianceField<T>,
    dataset: &Dataset,
    camera: &Camera,
    samples_per_ray: usize,
) -> Result<Image> {
    let rays = dataset.camera_rays(camera)?;
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let samples = draw_samples(&rays, samples_per_ray, SamplingMode::BinCenters, &mut rng);
    let renders = render_batch(field, &rays, &samples, dataset.background)?;
    let pixels = renders.iter().map(|r| r.rgb.map(|v| v.f64() as f32)).collect();
    Image::from_pixels(camera.width, camera.height, pixels)
}

/// Per-sample state of a whole image render, for diagnostics.
pub fn render_image_detailed<T: Real>(
    field: &RadianceField<T>,
    dataset: &Dataset,
    camera: &Camera,
    samples_per_ray: usize,
) -> Result<Vec<RenderResult<T>>> {
    let rays = dataset.camera_rays(camera)?;
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let samples = draw_samples(&rays, samples_per_ray, SamplingMode::BinCenters, &mut rng);
    render_batch(field, &rays, &samples, dataset.background)
}

/// Flattens every pixel of a dataset into rays and target colors.
pub fn dataset_rays<T: Real>(dataset: &Dataset) -> Result<(Vec<Option<Ray>>, Vec<[T; 3]>)> {
    let mut rays = Vec::new();
    let mut targets = Vec::new();
    for v in &dataset.views {
        rays.extend(dataset.camera_rays(&v.camera)?);
        targets.extend(v.image.pixels.iter().map(|p| p.map(|c| T::of(c as f64))));
    }
    Ok((rays, targets))
}

/// Pixel rows as an `R x 3` array.
pub fn colors_to_array<T: Real>(colors: &[[T; 3]]) -> Array2<T> {
    Array2::from_shape_fn((colors.len(), 3), |(i, c)| colors[i][c])
}
