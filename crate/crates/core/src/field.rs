//! The radiance field: a geometry network predicts SH coefficients for density
//! and latent features at each position, the coefficients are composed with
//! the SH basis at the viewing direction, and a color network maps the
//! composed latent feature plus the encoded direction to RGB.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{encode_into, PositionalEncodingConfig};
use crate::error::{Error, Result};
use crate::mlp::{Mlp, MlpCache, MlpShape};
use crate::real::{sigmoid, softplus, Real};
use crate::sh::{eval_sh_basis_into, num_sh_coeffs, Direction, MAX_SH_DEGREE};

/// Which quantity the density anisotropy penalty sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityAnisotropy {
    /// The raw `l >= 1` SH tail of the density, before softplus.
    #[default]
    PreActivation,
    /// `softplus(sigma_raw) - softplus(k_0 * Y_0^0)`.
    PostActivation,
}

/// Which of density / latent feature receive view-dependent SH terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldVariant {
    #[default]
    Full,
    /// Anisotropic density, isotropic latent feature.
    AnisoDensity,
    /// Isotropic density, anisotropic latent feature.
    AnisoLatent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub density_degree: usize,
    pub latent_degree: usize,
    /// Latent feature width `K`.
    pub latent_width: usize,
    pub geometry_hidden: Vec<usize>,
    pub color_hidden: Vec<usize>,
    pub encoding: PositionalEncodingConfig,
    #[serde(default)]
    pub density_anisotropy: DensityAnisotropy,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            density_degree: 3,
            latent_degree: 3,
            latent_width: 15,
            geometry_hidden: vec![128; 4],
            color_hidden: vec![64; 2],
            encoding: PositionalEncodingConfig::default(),
            density_anisotropy: DensityAnisotropy::PreActivation,
        }
    }
}

impl FieldConfig {
    pub fn with_degree(mut self, degree: usize) -> Self {
        self.density_degree = degree;
        self.latent_degree = degree;
        self
    }

    /// Applies an ablation variant on top of the configured maximal degree.
    pub fn with_variant(mut self, variant: FieldVariant) -> Self {
        let degree = self.density_degree.max(self.latent_degree);
        match variant {
            FieldVariant::Full => {
                self.density_degree = degree;
                self.latent_degree = degree;
            }
            FieldVariant::AnisoDensity => {
                self.density_degree = degree;
                self.latent_degree = 0;
            }
            FieldVariant::AnisoLatent => {
                self.density_degree = 0;
                self.latent_degree = degree;
            }
        }
        self
    }

    pub fn density_coeffs(&self) -> usize {
        num_sh_coeffs(self.density_degree)
    }

    pub fn latent_coeffs(&self) -> usize {
        num_sh_coeffs(self.latent_degree)
    }

    pub fn max_degree(&self) -> usize {
        self.density_degree.max(self.latent_degree)
    }

    pub fn basis_width(&self) -> usize {
        num_sh_coeffs(self.max_degree())
    }

    pub fn geometry_output_width(&self) -> usize {
        self.density_coeffs() + self.latent_width * self.latent_coeffs()
    }

    pub fn geometry_shape(&self) -> MlpShape {
        MlpShape {
            input: self.encoding.position_width(),
            hidden: self.geometry_hidden.clone(),
            output: self.geometry_output_width(),
        }
    }

    pub fn color_shape(&self) -> MlpShape {
        MlpShape {
            input: self.latent_width + self.encoding.direction_width(),
            hidden: self.color_hidden.clone(),
            output: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_degree() > MAX_SH_DEGREE {
            return Err(Error::Config(format!(
                "SH degree {} exceeds the supported maximum {MAX_SH_DEGREE}",
                self.max_degree()
            )));
        }
        if self.latent_width == 0 {
            return Err(Error::Config("latent width must be positive".into()));
        }
        if self.geometry_hidden.iter().chain(&self.color_hidden).any(|&w| w == 0) {
            return Err(Error::Config("hidden layers must have positive width".into()));
        }
        Ok(())
    }
}

/// Weights of both networks. Also used as the gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldParams<T> {
    pub geometry: Mlp<T>,
    pub color: Mlp<T>,
}

impl<T: Real> FieldParams<T> {
    pub fn zeros(config: &FieldConfig) -> Self {
        Self {
            geometry: Mlp::zeros(&config.geometry_shape()),
            color: Mlp::zeros(&config.color_shape()),
        }
    }

    pub fn init(config: &FieldConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            geometry: Mlp::he_uniform(&config.geometry_shape(), &mut rng),
            color: Mlp::he_uniform(&config.color_shape(), &mut rng),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            geometry: Mlp::zeros(&self.geometry.shape()),
            color: Mlp::zeros(&self.color.shape()),
        }
    }

    pub fn matches(&self, config: &FieldConfig) -> bool {
        self.geometry.shape() == config.geometry_shape() && self.color.shape() == config.color_shape()
    }

    pub fn blocks(&self) -> Vec<(String, &[T])> {
        let mut b = self.geometry.blocks("geometry");
        b.extend(self.color.blocks("color"));
        b
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [T]> {
        let mut b = self.geometry.blocks_mut();
        b.extend(self.color.blocks_mut());
        b
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|(_, s)| s.len()).sum()
    }

    pub fn fill_zero(&mut self) {
        self.geometry.fill_zero();
        self.color.fill_zero();
    }

    /// `self += other`, block by block in declared order.
    pub fn add_assign(&mut self, other: &Self) {
        for (dst, (_, src)) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += *s;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for b in self.blocks_mut() {
            for v in b.iter_mut() {
                *v *= factor;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.blocks()
            .iter()
            .all(|(_, b)| b.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> FieldParams<U> {
        FieldParams {
            geometry: self.geometry.cast(),
            color: self.color.cast(),
        }
    }
}

/// Per-point SH coefficients predicted by the geometry network.
#[derive(Debug, Clone, PartialEq)]
pub struct ShCoefficientBlock<T> {
    /// Density coefficients.
    pub k: Array1<T>,
    /// Latent coefficients, `K x (L + 1)^2`.
    pub w: Array2<T>,
}

impl<T: Real> ShCoefficientBlock<T> {
    pub fn from_raw(raw: ArrayView1<T>, density_coeffs: usize, latent_width: usize) -> Result<Self> {
        if latent_width == 0 || raw.len() < density_coeffs || (raw.len() - density_coeffs) % latent_width != 0 {
            return Err(Error::Config(format!(
                "geometry output of width {} cannot hold {density_coeffs} density and {latent_width} latent rows",
                raw.len()
            )));
        }
        let latent_coeffs = (raw.len() - density_coeffs) / latent_width;
        let k = raw.slice(s![..density_coeffs]).to_owned();
        let w = raw
            .slice(s![density_coeffs..])
            .to_owned()
            .into_shape_with_order((latent_width, latent_coeffs))
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self { k, w })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityComposition<T> {
    /// `softplus(sigma_raw)`.
    pub sigma: T,
    /// Full SH sum.
    pub sigma_raw: T,
    /// SH sum over `l >= 1` only.
    pub sigma_aniso_raw: T,
}

/// Composes density coefficients with a basis of the same width.
pub fn compose_density<T: Real>(k: &[T], basis: &[T]) -> Result<DensityComposition<T>> {
    if k.len() != basis.len() || k.is_empty() {
        return Err(Error::Config(format!(
            "density coefficients ({}) and basis ({}) differ in width",
            k.len(),
            basis.len()
        )));
    }
    let sigma_aniso_raw = dot(&k[1..], &basis[1..]);
    let sigma_raw = k[0] * basis[0] + sigma_aniso_raw;
    Ok(DensityComposition {
        sigma: softplus(sigma_raw),
        sigma_raw,
        sigma_aniso_raw,
    })
}

/// Returns the latent feature `e = W b` and its anisotropic part
/// `W[:, 1..] b[1..]`.
pub fn compose_latent<T: Real>(w: ArrayView2<T>, basis: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    if w.ncols() != basis.len() || basis.is_empty() {
        return Err(Error::Config(format!(
            "latent coefficients ({}) and basis ({}) differ in width",
            w.ncols(),
            basis.len()
        )));
    }
    let mut e = Vec::with_capacity(w.nrows());
    let mut e_aniso = Vec::with_capacity(w.nrows());
    for row in w.rows() {
        let row = row.to_vec();
        let tail = dot(&row[1..], &basis[1..]);
        e.push(row[0] * basis[0] + tail);
        e_aniso.push(tail);
    }
    Ok((e, e_aniso))
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Network inputs for a batch of points.
#[derive(Debug, Clone)]
pub struct FieldInputs<T> {
    /// Encoded positions, `P x position_width`.
    pub position_features: Array2<T>,
    /// Encoded directions, `P x direction_width`.
    pub direction_features: Array2<T>,
    /// SH basis at each point's viewing direction, `P x basis_width`.
    pub basis: Array2<T>,
}

impl<T: Real> FieldInputs<T> {
    pub fn len(&self) -> usize {
        self.basis.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Builds inputs for points that share per-ray directions: `positions[i]`
    /// is viewed along `directions[ray_of[i]]`.
    pub fn from_rays(
        config: &FieldConfig,
        positions: &[[T; 3]],
        directions: &[Direction],
        ray_of: impl Fn(usize) -> usize,
    ) -> Result<Self> {
        config.validate()?;
        let enc = &config.encoding;
        let p = positions.len();
        let mut position_features = Array2::zeros((p, enc.position_width()));
        let mut direction_features = Array2::zeros((p, enc.direction_width()));
        let mut basis = Array2::zeros((p, config.basis_width()));

        let degree = config.max_degree();
        let mut ray_basis = vec![Vec::new(); directions.len()];
        let mut ray_dir_features = vec![Vec::new(); directions.len()];
        let mut scratch = vec![0.0f64; config.basis_width()];
        for (r, d) in directions.iter().enumerate() {
            eval_sh_basis_into(*d, degree, &mut scratch)?;
            ray_basis[r] = scratch.iter().map(|&v| T::of(v)).collect::<Vec<T>>();
            let da = d.to_array().map(T::of);
            let mut f = vec![T::zero(); enc.direction_width()];
            encode_into(da, enc.num_frequencies_direction, enc.include_input, &mut f);
            ray_dir_features[r] = f;
        }
        for (i, x) in positions.iter().enumerate() {
            let r = ray_of(i);
            encode_into(
                *x,
                enc.num_frequencies_position,
                enc.include_input,
                position_features.row_mut(i).as_slice_mut().expect("row-major"),
            );
            direction_features
                .row_mut(i)
                .as_slice_mut()
                .expect("row-major")
                .copy_from_slice(&ray_dir_features[r]);
            basis
                .row_mut(i)
                .as_slice_mut()
                .expect("row-major")
                .copy_from_slice(&ray_basis[r]);
        }
        Ok(Self {
            position_features,
            direction_features,
            basis,
        })
    }

    /// One direction per point.
    pub fn from_points(config: &FieldConfig, positions: &[[T; 3]], directions: &[Direction]) -> Result<Self> {
        if positions.len() != directions.len() {
            return Err(Error::Config(format!(
                "{} positions but {} directions",
                positions.len(),
                directions.len()
            )));
        }
        Self::from_rays(config, positions, directions, |i| i)
    }
}

/// Per-point field outputs for a batch.
#[derive(Debug, Clone)]
pub struct FieldOutputs<T> {
    pub sigma: Array1<T>,
    pub sigma_raw: Array1<T>,
    /// The density anisotropy seen by the regularizer.
    pub sigma_aniso: Array1<T>,
    /// Composed latent features, `P x K`.
    pub latent: Array2<T>,
    /// `l >= 1` part of the latent features, `P x K`.
    pub latent_aniso: Array2<T>,
    /// `P x 3`, each channel in `(0, 1)`.
    pub rgb: Array2<T>,
}

/// State kept from a forward pass for the reverse pass.
#[derive(Debug, Clone)]
pub struct FieldCache<T> {
    geometry: MlpCache<T>,
    color: MlpCache<T>,
    geometry_out: Array2<T>,
    basis: Array2<T>,
    sigma_raw: Array1<T>,
    rgb: Array2<T>,
}

impl<T: Real> FieldCache<T> {
    /// ReLU activation pattern of both networks over every point.
    pub fn relu_mask(&self) -> Vec<bool> {
        self.geometry.relu_mask().chain(self.color.relu_mask()).collect()
    }

    pub fn len(&self) -> usize {
        self.sigma_raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma_raw.is_empty()
    }
}

/// Upstream gradients of the loss with respect to the field outputs.
#[derive(Debug, Clone)]
pub struct FieldUpstream<T> {
    pub d_sigma: Array1<T>,
    pub d_rgb: Array2<T>,
    pub d_sigma_aniso: Array1<T>,
    pub d_latent_aniso: Array2<T>,
}

impl<T: Real> FieldUpstream<T> {
    pub fn zeros(points: usize, latent_width: usize) -> Self {
        Self {
            d_sigma: Array1::zeros(points),
            d_rgb: Array2::zeros((points, 3)),
            d_sigma_aniso: Array1::zeros(points),
            d_latent_aniso: Array2::zeros((points, latent_width)),
        }
    }
}

/// A configured field with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RadianceField<T> {
    pub config: FieldConfig,
    pub params: FieldParams<T>,
}

impl<T: Real> RadianceField<T> {
    pub fn new(config: FieldConfig, seed: u64) -> Result<Self> {
        let params = FieldParams::init(&config, seed)?;
        Ok(Self { config, params })
    }

    pub fn from_parts(config: FieldConfig, params: FieldParams<T>) -> Result<Self> {
        config.validate()?;
        if !params.matches(&config) {
            return Err(Error::Config(
                "parameter shapes do not match the field configuration".into(),
            ));
        }
        Ok(Self { config, params })
    }

    /// Geometry network on one encoded position.
    pub fn geometry_forward(&self, position_features: &[T]) -> Result<ShCoefficientBlock<T>> {
        geometry_forward(&self.params.geometry, &self.config, position_features)
    }

    /// Color network on one encoded direction and latent feature.
    pub fn color_forward(&self, direction_features: &[T], latent: &[T]) -> Result<[T; 3]> {
        color_forward(&self.params.color, direction_features, latent)
    }

    pub fn forward(&self, inputs: &FieldInputs<T>) -> Result<(FieldOutputs<T>, FieldCache<T>)> {
        field_forward(&self.config, &self.params, inputs)
    }

    pub fn backward(
        &self,
        cache: &FieldCache<T>,
        upstream: &FieldUpstream<T>,
        grads: &mut FieldParams<T>,
    ) -> Result<()> {
        field_backward(&self.config, &self.params, cache, upstream, grads)
    }

    /// Convenience point query: `(sigma, rgb)` for each position/direction pair.
    pub fn query(&self, positions: &[[T; 3]], directions: &[Direction]) -> Result<FieldOutputs<T>> {
        let inputs = FieldInputs::from_points(&self.config, positions, directions)?;
        Ok(self.forward(&inputs)?.0)
    }
}

pub fn geometry_forward<T: Real>(
    geometry: &Mlp<T>,
    config: &FieldConfig,
    position_features: &[T],
) -> Result<ShCoefficientBlock<T>> {
    let x = ArrayView2::from_shape((1, position_features.len()), position_features)
        .map_err(|e| Error::Config(e.to_string()))?;
    let out = geometry.forward_inference(x)?;
    if out.ncols() != config.geometry_output_width() {
        return Err(Error::Config(format!(
            "geometry network produces {} values, configuration needs {}",
            out.ncols(),
            config.geometry_output_width()
        )));
    }
    ShCoefficientBlock::from_raw(out.row(0), config.density_coeffs(), config.latent_width)
}

pub fn color_forward<T: Real>(color: &Mlp<T>, direction_features: &[T], latent: &[T]) -> Result<[T; 3]> {
    let mut input = Vec::with_capacity(latent.len() + direction_features.len());
    input.extend_from_slice(latent);
    input.extend_from_slice(direction_features);
    let x = ArrayView2::from_shape((1, input.len()), &input).map_err(|e| Error::Config(e.to_string()))?;
    let out = color.forward_inference(x)?;
    if out.ncols() != 3 {
        return Err(Error::Config(format!(
            "color network produces {} values, expected 3",
            out.ncols()
        )));
    }
    Ok([sigmoid(out[[0, 0]]), sigmoid(out[[0, 1]]), sigmoid(out[[0, 2]])])
}

fn check_inputs<T: Real>(config: &FieldConfig, params: &FieldParams<T>, inputs: &FieldInputs<T>) -> Result<()> {
    if !params.matches(config) {
        return Err(Error::Config(
            "parameter shapes do not match the field configuration".into(),
        ));
    }
    let p = inputs.len();
    if inputs.position_features.nrows() != p || inputs.direction_features.nrows() != p {
        return Err(Error::Config("field inputs disagree on point count".into()));
    }
    if inputs.basis.ncols() < config.basis_width() {
        return Err(Error::Config(format!(
            "basis has {} columns, configuration needs {}",
            inputs.basis.ncols(),
            config.basis_width()
        )));
    }
    Ok(())
}

pub fn field_forward<T: Real>(
    config: &FieldConfig,
    params: &FieldParams<T>,
    inputs: &FieldInputs<T>,
) -> Result<(FieldOutputs<T>, FieldCache<T>)> {
    check_inputs(config, params, inputs)?;
    let p = inputs.len();
    let kw = config.latent_width;
    let sd = config.density_coeffs();
    let sl = config.latent_coeffs();

    let (geometry_out, geometry_cache) = params.geometry.forward(inputs.position_features.view())?;

    let mut sigma = Array1::zeros(p);
    let mut sigma_raw = Array1::zeros(p);
    let mut sigma_aniso = Array1::zeros(p);
    let mut latent = Array2::zeros((p, kw));
    let mut latent_aniso = Array2::zeros((p, kw));
    for i in 0..p {
        let g = geometry_out.row(i);
        let g = g.as_slice().expect("row-major");
        let b = inputs.basis.row(i);
        let b = b.as_slice().expect("row-major");

        let dens = compose_density(&g[..sd], &b[..sd])?;
        sigma[i] = dens.sigma;
        sigma_raw[i] = dens.sigma_raw;
        sigma_aniso[i] = match config.density_anisotropy {
            DensityAnisotropy::PreActivation => dens.sigma_aniso_raw,
            DensityAnisotropy::PostActivation => dens.sigma - softplus(g[0] * b[0]),
        };
        for n in 0..kw {
            let row = &g[sd + n * sl..sd + (n + 1) * sl];
            let tail = dot(&row[1..], &b[1..sl]);
            latent[[i, n]] = row[0] * b[0] + tail;
            latent_aniso[[i, n]] = tail;
        }
    }

    let mut color_in = Array2::zeros((p, kw + inputs.direction_features.ncols()));
    color_in.slice_mut(s![.., ..kw]).assign(&latent);
    color_in.slice_mut(s![.., kw..]).assign(&inputs.direction_features);
    let (mut rgb, color_cache) = params.color.forward(color_in.view())?;
    rgb.mapv_inplace(sigmoid);

    let cache = FieldCache {
        geometry: geometry_cache,
        color: color_cache,
        geometry_out,
        basis: inputs.basis.slice(s![.., ..config.basis_width()]).to_owned(),
        sigma_raw: sigma_raw.clone(),
        rgb: rgb.clone(),
    };
    Ok((
        FieldOutputs {
            sigma,
            sigma_raw,
            sigma_aniso,
            latent,
            latent_aniso,
            rgb,
        },
        cache,
    ))
}

/// Reverse pass through the color head, SH composition and geometry network.
/// Gradients are accumulated into `grads`.
pub fn field_backward<T: Real>(
    config: &FieldConfig,
    params: &FieldParams<T>,
    cache: &FieldCache<T>,
    upstream: &FieldUpstream<T>,
    grads: &mut FieldParams<T>,
) -> Result<()> {
    let p = cache.len();
    let kw = config.latent_width;
    let sd = config.density_coeffs();
    let sl = config.latent_coeffs();
    if upstream.d_sigma.len() != p
        || upstream.d_rgb.dim() != (p, 3)
        || upstream.d_sigma_aniso.len() != p
        || upstream.d_latent_aniso.dim() != (p, kw)
    {
        return Err(Error::Usage(format!(
            "upstream gradients do not match the cached batch of {p} points"
        )));
    }
    if cache.geometry_out.ncols() != config.geometry_output_width() || !grads.matches(config) {
        return Err(Error::Usage(
            "field cache or gradient buffer belongs to a different configuration".into(),
        ));
    }

    // Sigmoid head.
    let mut d_color_out = upstream.d_rgb.clone();
    Zip::from(&mut d_color_out)
        .and(&cache.rgb)
        .for_each(|d, &c| *d *= c * (T::one() - c));
    let d_color_in = params.color.backward(&cache.color, d_color_out, &mut grads.color)?;
    let d_latent = d_color_in.slice(s![.., ..kw]);

    let mut d_geometry = Array2::zeros(cache.geometry_out.raw_dim());
    for i in 0..p {
        let b = cache.basis.row(i);
        let b = b.as_slice().expect("row-major");
        let g = cache.geometry_out.row(i);
        let mut dg = d_geometry.row_mut(i);
        let dg = dg.as_slice_mut().expect("row-major");

        let sr = cache.sigma_raw[i];
        let mut d_raw = upstream.d_sigma[i] * sigmoid(sr);
        let d_aniso = upstream.d_sigma_aniso[i];
        match config.density_anisotropy {
            DensityAnisotropy::PreActivation => {
                for s in 1..sd {
                    dg[s] += d_aniso * b[s];
                }
            }
            DensityAnisotropy::PostActivation => {
                d_raw += d_aniso * sigmoid(sr);
                dg[0] -= d_aniso * sigmoid(g[0] * b[0]) * b[0];
            }
        }
        for s in 0..sd {
            dg[s] += d_raw * b[s];
        }

        for n in 0..kw {
            let de = d_latent[[i, n]];
            let de_tail = de + upstream.d_latent_aniso[[i, n]];
            let base = sd + n * sl;
            dg[base] += de * b[0];
            for s in 1..sl {
                dg[base + s] += de_tail * b[s];
            }
        }
    }
    params
        .geometry
        .backward(&cache.geometry, d_geometry, &mut grads.geometry)?;
    Ok(())
}

/// `<outputs, upstream>`: the scalar whose gradient `field_backward` computes
/// when handed `upstream`.
pub fn weighted_output_sum<T: Real>(outputs: &FieldOutputs<T>, upstream: &FieldUpstream<T>) -> T {
    let mut acc = (&outputs.sigma * &upstream.d_sigma).sum();
    acc += (&outputs.rgb * &upstream.d_rgb).sum();
    acc += (&outputs.sigma_aniso * &upstream.d_sigma_aniso).sum();
    acc += (&outputs.latent_aniso * &upstream.d_latent_aniso).sum();
    acc
}
