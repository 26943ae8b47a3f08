//! Stratified sampling, discrete volume rendering with its reverse pass, and
//! a fine-grid quadrature of the continuous rendering integral.
//!
//! For samples `t_1 < ... < t_N` with widths `delta_i`:
//!
//! ```text
//! alpha_i = 1 - exp(-sigma_i * delta_i)
//! T_1 = 1,  T_{i+1} = T_i * (1 - alpha_i)
//! rgb = sum_i T_i alpha_i c_i + T_{N+1} * background
//! ```

use rand::Rng;

use crate::camera::Ray;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::sh::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingMode {
    /// One uniform draw in each of the `N` equal bins.
    #[default]
    Stratified,
    /// Bin centers, no randomness.
    BinCenters,
}

/// Sample distances along a ray and the interval width assigned to each.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub t: Vec<f64>,
    /// `t_{i+1} - t_i`, with the last width running to `t_far`.
    pub delta: Vec<f64>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn from_distances(t: Vec<f64>, t_far: f64) -> Self {
        let n = t.len();
        let mut delta = Vec::with_capacity(n);
        for i in 0..n {
            let next = if i + 1 < n { t[i + 1] } else { t_far };
            delta.push(next - t[i]);
        }
        Self { t, delta }
    }
}

pub fn sample_stratified(ray: &Ray, n: usize, mode: SamplingMode, rng: &mut impl Rng) -> SampleSet {
    assert!(n >= 1, "at least one sample per ray");
    let width = (ray.t_far - ray.t_near) / n as f64;
    let t = (0..n)
        .map(|i| {
            let u = match mode {
                SamplingMode::Stratified => rng.gen::<f64>(),
                SamplingMode::BinCenters => 0.5,
            };
            ray.t_near + (i as f64 + u) * width
        })
        .collect();
    SampleSet::from_distances(t, ray.t_far)
}

/// Per-sample state kept for the reverse pass.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderCache<T> {
    /// `T_1 ..= T_{N+1}`.
    pub transmittance: Vec<T>,
    pub alpha: Vec<T>,
    pub sigma: Vec<T>,
    pub color: Vec<[T; 3]>,
    pub delta: Vec<T>,
    pub background: [T; 3],
}

impl<T: Real> RenderCache<T> {
    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// `T_i * alpha_i` for every sample.
    pub fn weights(&self) -> Vec<T> {
        self.transmittance
            .iter()
            .zip(&self.alpha)
            .map(|(&t, &a)| t * a)
            .collect()
    }

    fn is_consistent(&self) -> bool {
        let n = self.sigma.len();
        self.transmittance.len() == n + 1
            && self.alpha.len() == n
            && self.color.len() == n
            && self.delta.len() == n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderResult<T> {
    pub rgb: [T; 3],
    /// `1 - T_{N+1}`.
    pub opacity: T,
    pub cache: RenderCache<T>,
}

/// Alpha-composites per-sample densities and colors. `ray` only labels errors.
pub fn composite<T: Real>(
    sigma: &[T],
    color: &[[T; 3]],
    delta: &[T],
    background: [T; 3],
    ray: usize,
) -> Result<RenderResult<T>> {
    let n = sigma.len();
    if color.len() != n || delta.len() != n {
        return Err(Error::Usage(format!(
            "{n} densities, {} colors and {} widths on ray {ray}",
            color.len(),
            delta.len()
        )));
    }
    let mut transmittance = Vec::with_capacity(n + 1);
    let mut alpha = Vec::with_capacity(n);
    let mut rgb = [T::zero(); 3];
    let mut trans = T::one();
    transmittance.push(trans);
    for i in 0..n {
        let s = sigma[i];
        let c = color[i];
        if !s.is_finite() || !c.iter().all(|v| v.is_finite()) {
            return Err(Error::Render {
                ray,
                reason: format!("non-finite field value at sample {i}"),
            });
        }
        let survive = (-s * delta[i]).exp();
        let a = T::one() - survive;
        let w = trans * a;
        for ch in 0..3 {
            rgb[ch] += w * c[ch];
        }
        trans *= survive;
        alpha.push(a);
        transmittance.push(trans);
    }
    for ch in 0..3 {
        rgb[ch] += trans * background[ch];
    }
    Ok(RenderResult {
        rgb,
        opacity: T::one() - trans,
        cache: RenderCache {
            transmittance,
            alpha,
            sigma: sigma.to_vec(),
            color: color.to_vec(),
            delta: delta.to_vec(),
            background,
        },
    })
}

/// Queries a field at every sample of a ray and composites the result.
///
/// `query` receives the sample positions and the ray direction and returns
/// one density and one color per position.
pub fn render_ray<T, F>(query: F, ray: &Ray, samples: &SampleSet, background: [T; 3]) -> Result<RenderResult<T>>
where
    T: Real,
    F: FnOnce(&[[T; 3]], Direction) -> Result<(Vec<T>, Vec<[T; 3]>)>,
{
    let points: Vec<[T; 3]> = samples.t.iter().map(|&t| ray.at(t).map(T::of)).collect();
    let (sigma, color) = query(&points, ray.direction)?;
    let delta: Vec<T> = samples.delta.iter().map(|&d| T::of(d)).collect();
    composite(&sigma, &color, &delta, background, 0)
}

/// Gradients of a composited ray with respect to each sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RayGradients<T> {
    pub d_sigma: Vec<T>,
    pub d_color: Vec<[T; 3]>,
}

pub fn render_ray_backward<T: Real>(cache: &RenderCache<T>, d_rgb: [T; 3], d_opacity: T) -> Result<RayGradients<T>> {
    if !cache.is_consistent() {
        return Err(Error::Usage("render cache is inconsistent with its forward pass".into()));
    }
    let n = cache.len();
    let tn = cache.transmittance[n];
    let dot3 = |a: &[T; 3], b: &[T; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];

    let mut d_sigma = vec![T::zero(); n];
    let mut d_color = vec![[T::zero(); 3]; n];
    // Contribution of everything behind sample k, including the background
    // and opacity terms: sum_{i>k} w_i <c_i, g> + T_{N+1} (<bg, g> - d_opacity).
    let mut behind = tn * (dot3(&cache.background, &d_rgb) - d_opacity);
    for k in (0..n).rev() {
        let w = cache.transmittance[k] * cache.alpha[k];
        let cg = dot3(&cache.color[k], &d_rgb);
        d_color[k] = [w * d_rgb[0], w * d_rgb[1], w * d_rgb[2]];
        d_sigma[k] = cache.delta[k] * (cache.transmittance[k + 1] * cg - behind);
        behind += w * cg;
    }
    Ok(RayGradients { d_sigma, d_color })
}

/// A volume with closed-form density and emitted color.
pub trait VolumeField: Sync {
    fn density(&self, x: [f64; 3], d: Direction) -> f64;
    fn color(&self, x: [f64; 3], d: Direction) -> [f64; 3];
}

/// Composite-midpoint quadrature of the continuous rendering integral on
/// `fine_n` equal bins of `[t_near, t_far]`, with transmittance accumulated
/// exactly within each bin. Use `fine_n >= 1024` for reference values.
pub fn integrate_ray_oracle(field: &dyn VolumeField, ray: &Ray, fine_n: usize, background: [f64; 3]) -> [f64; 3] {
    assert!(fine_n >= 1, "at least one quadrature bin");
    let h = (ray.t_far - ray.t_near) / fine_n as f64;
    let d = ray.direction;
    let mut trans = 1.0f64;
    let mut rgb = [0.0f64; 3];
    for j in 0..fine_n {
        let x = ray.at(ray.t_near + (j as f64 + 0.5) * h);
        let s = field.density(x, d);
        if s <= 0.0 {
            continue;
        }
        let survive = (-s * h).exp();
        let w = trans * (1.0 - survive);
        let c = field.color(x, d);
        for ch in 0..3 {
            rgb[ch] += w * c[ch];
        }
        trans *= survive;
    }
    for ch in 0..3 {
        rgb[ch] += trans * background[ch];
    }
    rgb
}
