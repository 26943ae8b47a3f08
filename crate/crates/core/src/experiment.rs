//! Train/evaluate runs on a generated scene and parameter sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{render_reference_dataset, Dataset, RigConfig, Split};
use crate::encoding::PositionalEncodingConfig;
use crate::error::{Error, Result};
use crate::field::FieldParams;
use crate::loss::LossReport;
use crate::metrics::{evaluate, EvalReport};
use crate::scene::{make_scene, SceneKind, SceneParams};
use crate::train::{train, TrainConfig, TrainingRays};

/// A generated train/test pair and the training recipe applied to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scene: SceneParams,
    pub resolution: usize,
    pub train_views: usize,
    pub test_views: usize,
    pub fine_n: usize,
    pub rig: RigConfig,
    /// Seed for the camera placement; test cameras use `view_seed + 1`.
    pub view_seed: u64,
    pub train: TrainConfig,
    /// Samples per ray when rendering test views.
    pub eval_samples: usize,
}

impl Default for ExperimentConfig {
    /// The desk-scale comparison on the slat scene: a small network trained
    /// for 10k iterations at a higher learning rate than [`TrainConfig`]'s
    /// default, which is too slow to converge in that budget.
    fn default() -> Self {
        Self {
            scene: SceneParams::default_for(SceneKind::AnisotropicSlats),
            resolution: 64,
            train_views: 30,
            test_views: 10,
            fine_n: 4096,
            rig: RigConfig::default(),
            view_seed: 0,
            train: TrainConfig {
                latent_width: 8,
                geometry_hidden: vec![64, 64],
                color_hidden: vec![32],
                encoding: PositionalEncodingConfig {
                    num_frequencies_position: 6,
                    num_frequencies_direction: 2,
                    include_input: true,
                },
                learning_rate: 5e-3,
                learning_rate_final: 5e-4,
                batch_rays: 256,
                samples_per_ray: 32,
                iterations: 10_000,
                log_every: 0,
                ..TrainConfig::default()
            },
            eval_samples: 32,
        }
    }
}

pub struct ExperimentData {
    pub train: Dataset,
    pub test: Dataset,
    pub rays: TrainingRays<f32>,
}

impl ExperimentData {
    pub fn from_datasets(train: Dataset, test: Dataset) -> Result<Self> {
        let rays = TrainingRays::from_dataset(&train)?;
        Ok(Self { train, test, rays })
    }
}

impl ExperimentConfig {
    pub fn prepare(&self) -> Result<ExperimentData> {
        let scene = make_scene(self.scene)?;
        let train = render_reference_dataset(
            &scene,
            self.train_views,
            self.resolution,
            self.fine_n,
            self.view_seed,
            &self.rig,
            Split::Train,
        )?;
        let test = render_reference_dataset(
            &scene,
            self.test_views,
            self.resolution,
            self.fine_n,
            self.view_seed + 1,
            &self.rig,
            Split::Test,
        )?;
        ExperimentData::from_datasets(train, test)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: TrainConfig,
    /// `None` when training diverged.
    pub eval: Option<EvalReport>,
    pub final_loss: Option<LossReport>,
    pub error: Option<String>,
}

/// Trains from a fresh seeded initialization and evaluates on the test split.
pub fn train_and_evaluate(config: &TrainConfig, data: &ExperimentData, eval_samples: usize) -> Result<RunResult> {
    let field_config = config.field_config();
    let params = FieldParams::<f32>::init(&field_config, config.seed)?;
    match train(config, &data.rays, params) {
        Ok(out) => {
            let field = crate::field::RadianceField::from_parts(field_config, out.params)?;
            let (eval, _) = evaluate(&field, &data.test, eval_samples)?;
            Ok(RunResult {
                config: config.clone(),
                eval: Some(eval),
                final_loss: out.trace.last().copied(),
                error: None,
            })
        }
        Err(f) => {
            log::warn!("run diverged at iteration {}: {}", f.iteration, f.error);
            Ok(RunResult {
                config: config.clone(),
                eval: None,
                final_loss: f.trace.last().copied(),
                error: Some(f.error.to_string()),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    DegreeL,
    Lambda,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "degree_L" | "degree_l" | "degree" | "L" => Ok(SweepAxis::DegreeL),
            "lambda" => Ok(SweepAxis::Lambda),
            other => Err(Error::Input(format!("unknown sweep axis `{other}` (expected degree_L or lambda)"))),
        }
    }
}

impl SweepAxis {
    pub fn apply(self, base: &TrainConfig, value: f64) -> Result<TrainConfig> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::DegreeL => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(Error::Config(format!("SH degree must be a non-negative integer, got {value}")));
                }
                cfg.degree = value as usize;
            }
            SweepAxis::Lambda => cfg.lambda = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub error: Option<String>,
}

/// One independent train + eval per value, all from the same seed and data.
/// A diverged run is recorded and the sweep continues. With `parallel`, runs
/// execute concurrently; rows are identical either way.
pub fn cmd_sweep(
    base: &TrainConfig,
    axis: SweepAxis,
    values: &[f64],
    data: &ExperimentData,
    eval_samples: usize,
    parallel: bool,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Input("sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .map(|&v| axis.apply(base, v))
        .collect::<Result<Vec<_>>>()?;
    let row = |(&value, cfg): (&f64, &TrainConfig)| {
        let run = train_and_evaluate(cfg, data, eval_samples)?;
        Ok(SweepRow {
            value,
            psnr: run.eval.as_ref().map(|e| e.mean_psnr),
            ssim: run.eval.as_ref().map(|e| e.mean_ssim),
            error: run.error,
        })
    };
    if parallel {
        values.par_iter().zip(configs.par_iter()).map(row).collect()
    } else {
        values.iter().zip(&configs).map(row).collect()
    }
}

pub fn sweep_csv(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let name = match axis {
        SweepAxis::DegreeL => "degree_L",
        SweepAxis::Lambda => "lambda",
    };
    let mut s = format!("{name},psnr,ssim,status\n");
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{}\n",
            r.value,
            fmt(r.psnr),
            fmt(r.ssim),
            if r.error.is_some() { "diverged" } else { "ok" }
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::BlobParams;

    fn tiny_experiment() -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            scene: SceneParams::IsotropicBlob(BlobParams::default()),
            resolution: 12,
            train_views: 3,
            test_views: 2,
            fine_n: 256,
            eval_samples: 8,
            ..ExperimentConfig::default()
        };
        cfg.train.iterations = 5;
        cfg.train.batch_rays = 16;
        cfg.train.samples_per_ray = 8;
        cfg.train.geometry_hidden = vec![8];
        cfg.train.color_hidden = vec![4];
        cfg.train.latent_width = 2;
        cfg
    }

    #[test]
    fn single_value_sweep_equals_one_run() {
        let exp = tiny_experiment();
        let data = exp.prepare().unwrap();
        let rows = cmd_sweep(&exp.train, SweepAxis::Lambda, &[1e-4], &data, exp.eval_samples, false).unwrap();
        let run = train_and_evaluate(&SweepAxis::Lambda.apply(&exp.train, 1e-4).unwrap(), &data, exp.eval_samples).unwrap();
        assert_eq!(rows[0].psnr, run.eval.as_ref().map(|e| e.mean_psnr));
        assert_eq!(rows[0].ssim, run.eval.as_ref().map(|e| e.mean_ssim));
    }

    #[test]
    fn run_order_does_not_matter() {
        let exp = tiny_experiment();
        let data = exp.prepare().unwrap();
        let fwd = cmd_sweep(&exp.train, SweepAxis::DegreeL, &[0.0, 1.0, 2.0], &data, exp.eval_samples, false).unwrap();
        let mut rev = cmd_sweep(&exp.train, SweepAxis::DegreeL, &[2.0, 1.0, 0.0], &data, exp.eval_samples, true).unwrap();
        rev.reverse();
        assert_eq!(fwd, rev);
        assert!(sweep_csv(SweepAxis::DegreeL, &fwd).starts_with("degree_L,psnr,ssim,status\n0,"));
    }

    #[test]
    fn bad_sweeps_are_rejected() {
        let exp = tiny_experiment();
        let data = exp.prepare().unwrap();
        assert!(cmd_sweep(&exp.train, SweepAxis::Lambda, &[], &data, 8, false).is_err());
        assert!(cmd_sweep(&exp.train, SweepAxis::DegreeL, &[1.5], &data, 8, false).is_err());
        assert!(cmd_sweep(&exp.train, SweepAxis::Lambda, &[-1.0], &data, 8, false).is_err());
        assert!("bogus".parse::<SweepAxis>().is_err());
    }
}
