//! Differentiable radiance field whose density and latent features are
//! view-dependent through spherical-harmonic coefficients predicted per point,
//! together with a volume renderer, trainer, synthetic scenes and metrics.

pub mod camera;
pub mod checkpoint;
pub mod dataset;
pub mod adam;
pub mod encoding;
pub mod error;
pub mod experiment;
pub mod field;
pub mod gradcheck;
pub mod image_io;
pub mod loss;
pub mod metrics;
pub mod mlp;
pub mod pipeline;
pub mod real;
pub mod render;
pub mod scene;
pub mod sh;
pub mod train;

pub use error::{Error, Result};
