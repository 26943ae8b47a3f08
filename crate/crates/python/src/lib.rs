//! Python bindings for the radiance field, scenes, metrics and training.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use anisonerf::camera::Ray;
use anisonerf::checkpoint::{load_checkpoint, save_checkpoint};
use anisonerf::dataset::{load_transforms_json, render_reference_dataset, write_transforms_json, LoadOptions, RigConfig, Split};
use anisonerf::field::{FieldConfig, FieldParams, RadianceField};
use anisonerf::image_io::Image;
use anisonerf::metrics;
use anisonerf::render::{integrate_ray_oracle, VolumeField};
use anisonerf::scene::{make_scene, AnalyticScene, SceneKind, SceneParams};
use anisonerf::sh::{self, Direction};
use anisonerf::train::{train, TrainConfig, TrainingRays};
use anisonerf::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn direction(d: [f64; 3]) -> PyResult<Direction> {
    Direction::from_array(d).map_err(to_py)
}

fn scene_kind(name: &str) -> PyResult<SceneKind> {
    SceneKind::ALL
        .into_iter()
        .find(|k| k.name() == name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown scene kind `{name}`")))
}

/// Real SH basis values `Y_l^m(d)` for `l <= degree`, flat index `l(l+1)+m`.
#[pyfunction]
fn sh_basis(direction_xyz: [f64; 3], degree: usize) -> PyResult<Vec<f64>> {
    let basis = sh::eval_sh_basis(direction(direction_xyz)?, degree).map_err(to_py)?;
    Ok(basis.into_values())
}

#[pyfunction]
fn num_sh_coeffs(degree: usize) -> usize {
    sh::num_sh_coeffs(degree)
}

#[pyclass(name = "Field")]
struct PyField {
    inner: RadianceField<f64>,
}

#[pymethods]
impl PyField {
    #[new]
    #[pyo3(signature = (degree=3, latent_width=15, seed=0))]
    fn new(degree: usize, latent_width: usize, seed: u64) -> PyResult<Self> {
        let config = FieldConfig {
            latent_width,
            ..FieldConfig::default()
        }
        .with_degree(degree);
        Ok(Self {
            inner: RadianceField::new(config, seed).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_checkpoint(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&path, &self.inner).map_err(to_py)
    }

    #[getter]
    fn degree(&self) -> usize {
        self.inner.config.max_degree()
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.params.num_params()
    }

    /// Density, color and the anisotropic parts at each point.
    /// Returns `(sigma, rgb, sigma_aniso, latent_aniso_energy)`.
    #[allow(clippy::type_complexity)]
    fn query(
        &self,
        positions: Vec<[f64; 3]>,
        directions: Vec<[f64; 3]>,
    ) -> PyResult<(Vec<f64>, Vec<[f64; 3]>, Vec<f64>, Vec<f64>)> {
        let dirs = directions.into_iter().map(direction).collect::<PyResult<Vec<_>>>()?;
        let out = self.inner.query(&positions, &dirs).map_err(to_py)?;
        let rgb = out.rgb.rows().into_iter().map(|r| [r[0], r[1], r[2]]).collect();
        let energy = out
            .latent_aniso
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v * v).sum())
            .collect();
        Ok((out.sigma.to_vec(), rgb, out.sigma_aniso.to_vec(), energy))
    }
}

#[pyclass(name = "Scene")]
struct PyScene {
    inner: AnalyticScene,
}

#[pymethods]
impl PyScene {
    /// One of `isotropic_blob`, `thin_shell`, `anisotropic_slats`, with
    /// default parameters.
    #[new]
    fn new(kind: &str) -> PyResult<Self> {
        Ok(Self {
            inner: make_scene(SceneParams::default_for(scene_kind(kind)?)).map_err(to_py)?,
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn bbox(&self) -> ([f64; 3], [f64; 3]) {
        (self.inner.bbox.min, self.inner.bbox.max)
    }

    fn density(&self, x: [f64; 3], d: [f64; 3]) -> PyResult<f64> {
        Ok(self.inner.density(x, direction(d)?))
    }

    fn color(&self, x: [f64; 3], d: [f64; 3]) -> PyResult<[f64; 3]> {
        Ok(self.inner.color(x, direction(d)?))
    }

    /// Reference color of the ray `origin + t d`, `t` in `[near, far]`.
    #[pyo3(signature = (origin, d, near, far, fine_n=4096, background=[1.0, 1.0, 1.0]))]
    fn render_ray(&self, origin: [f64; 3], d: [f64; 3], near: f64, far: f64, fine_n: usize, background: [f64; 3]) -> PyResult<[f64; 3]> {
        if fine_n == 0 {
            return Err(PyValueError::new_err("fine_n must be >= 1"));
        }
        let ray = Ray::new(origin, direction(d)?, near, far).map_err(to_py)?;
        Ok(integrate_ray_oracle(&self.inner, &ray, fine_n, background))
    }

    /// Renders `views` reference images and writes them as a
    /// `transforms_<split>.json` dataset under `out_dir`. Returns the JSON path.
    #[pyo3(signature = (out_dir, views=10, resolution=32, fine_n=1024, seed=0, split="train"))]
    fn write_dataset(
        &self,
        out_dir: PathBuf,
        views: usize,
        resolution: usize,
        fine_n: usize,
        seed: u64,
        split: &str,
    ) -> PyResult<PathBuf> {
        let split = match split {
            "train" => Split::Train,
            "test" => Split::Test,
            other => return Err(PyValueError::new_err(format!("unknown split `{other}`"))),
        };
        let data = render_reference_dataset(&self.inner, views, resolution, fine_n, seed, &RigConfig::default(), split)
            .map_err(to_py)?;
        write_transforms_json(&out_dir, &data).map_err(to_py)
    }
}

fn image(rows: Vec<Vec<[f32; 3]>>) -> PyResult<Image> {
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err("image rows differ in length"));
    }
    Image::from_pixels(width, height, rows.into_iter().flatten().collect()).map_err(to_py)
}

/// PSNR in dB of two `H x W x 3` nested lists of linear values.
#[pyfunction]
fn psnr(a: Vec<Vec<[f32; 3]>>, b: Vec<Vec<[f32; 3]>>) -> PyResult<f64> {
    metrics::psnr(&image(a)?, &image(b)?).map_err(to_py)
}

#[pyfunction]
fn ssim(a: Vec<Vec<[f32; 3]>>, b: Vec<Vec<[f32; 3]>>) -> PyResult<f64> {
    metrics::ssim(&image(a)?, &image(b)?).map_err(to_py)
}

/// Geometric-mean summary of `(psnr, ssim)`.
#[pyfunction]
fn avg_err(psnr: f64, ssim: f64) -> f64 {
    metrics::avg_err(psnr, ssim)
}

/// Trains a field on a `transforms_train.json` dataset and returns the field
/// with the per-iteration total loss.
#[pyfunction]
#[pyo3(signature = (transforms, degree=3, lambda_=1e-4, iterations=200, batch_rays=256, samples_per_ray=32, seed=0))]
fn train_field(
    py: Python<'_>,
    transforms: PathBuf,
    degree: usize,
    lambda_: f64,
    iterations: usize,
    batch_rays: usize,
    samples_per_ray: usize,
    seed: u64,
) -> PyResult<(PyField, Vec<f64>)> {
    let data = load_transforms_json(&transforms, &LoadOptions::default()).map_err(to_py)?;
    let config = TrainConfig {
        degree,
        lambda: lambda_,
        iterations,
        batch_rays,
        samples_per_ray,
        seed,
        log_every: 0,
        ..TrainConfig::default()
    };
    let rays = TrainingRays::<f32>::from_dataset(&data).map_err(to_py)?;
    let field_config = config.field_config();
    let params = FieldParams::<f32>::init(&field_config, seed).map_err(to_py)?;
    let out = py
        .allow_threads(|| train(&config, &rays, params))
        .map_err(|f| to_py(f.error))?;
    let field = RadianceField::from_parts(field_config, out.params.cast::<f64>()).map_err(to_py)?;
    Ok((PyField { inner: field }, out.trace.iter().map(|r| r.total).collect()))
}

#[pymodule]
fn anisonerf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("MAX_SH_DEGREE", sh::MAX_SH_DEGREE)?;
    m.add_function(wrap_pyfunction!(sh_basis, m)?)?;
    m.add_function(wrap_pyfunction!(num_sh_coeffs, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(avg_err, m)?)?;
    m.add_function(wrap_pyfunction!(train_field, m)?)?;
    m.add_class::<PyField>()?;
    m.add_class::<PyScene>()?;
    Ok(())
}
