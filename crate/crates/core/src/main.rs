use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use anisonerf::checkpoint::{load_checkpoint, save_checkpoint};
use anisonerf::dataset::{load_transforms_json, write_transforms_json, Dataset, LoadOptions, SceneManifest, Split};
use anisonerf::experiment::{cmd_sweep, sweep_csv, ExperimentConfig, ExperimentData, SweepAxis};
use anisonerf::field::{FieldParams, RadianceField};
use anisonerf::gradcheck::{gradient_check, RenderLossProblem};
use anisonerf::image_io::write_png;
use anisonerf::metrics::evaluate;
use anisonerf::pipeline::{dataset_rays, draw_samples, render_image};
use anisonerf::render::SamplingMode;
use anisonerf::scene::{SceneKind, SceneParams};
use anisonerf::train::{train, write_loss_trace};
use anisonerf::{Error, Result};

#[derive(Parser)]
#[command(name = "anisonerf", version, about = "Radiance fields with SH-guided anisotropic features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config (scene, dataset and training settings).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// SH degree L.
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Samples per ray.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    /// full, aniso_density or aniso_latent.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    deterministic_sampling: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Directory with transforms_train.json / transforms_test.json. When
    /// absent the scene in the config is rendered in memory.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scene to a NeRF-synthetic style dataset.
    GenScene {
        #[command(flatten)]
        common: Common,
        /// isotropic_blob, thin_shell or anisotropic_slats.
        #[arg(long)]
        scene: Option<String>,
        #[arg(long)]
        fine_n: Option<usize>,
    },
    /// Train a field and write a checkpoint and loss trace.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Render the views of a split with a trained checkpoint.
    Render {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// PSNR / SSIM / Avg-2 of a checkpoint on a split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Train and evaluate once per value of an axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// degree_L or lambda.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Run the values concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Finite-difference check of the analytic gradient in 64-bit.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
        #[arg(long, default_value_t = 64)]
        rays: usize,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: p.clone(),
                reason: e.to_string(),
            })?
        }
        None => ExperimentConfig::default(),
    };
    let t = &mut cfg.train;
    if let Some(s) = common.seed {
        t.seed = s;
    }
    if let Some(d) = common.degree {
        t.degree = d;
    }
    if let Some(l) = common.lambda {
        t.lambda = l;
    }
    if let Some(n) = common.samples {
        t.samples_per_ray = n;
        cfg.eval_samples = n;
    }
    if let Some(i) = common.iters {
        t.iterations = i;
    }
    if let Some(v) = &common.variant {
        t.variant = serde_json::from_value(json!(v)).map_err(|_| {
            Error::Config(format!("unknown variant `{v}` (expected full, aniso_density or aniso_latent)"))
        })?;
    }
    if common.deterministic_sampling {
        cfg.train.deterministic_sampling = true;
    }
    if cfg.train.log_every == 0 {
        cfg.train.log_every = 500;
    }
    cfg.train.validate()?;
    Ok(cfg)
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn write_manifest(out: &Path, command: &str, cfg: &ExperimentConfig, extra: serde_json::Value) -> Result<()> {
    write_json(
        &out.join(format!("manifest_{command}.json")),
        &json!({
            "command": command,
            "config": cfg,
            "seed": cfg.train.seed,
            "git_describe": git_describe(),
            "outputs": extra,
        }),
    )
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_split(dir: &Path, split: Split, background: [f64; 3]) -> Result<Dataset> {
    let opts = LoadOptions {
        background,
        split,
        ..LoadOptions::default()
    };
    load_transforms_json(&dir.join(format!("transforms_{}.json", split.name())), &opts)
}

fn load_data(cfg: &ExperimentConfig, data: &DataArgs) -> Result<ExperimentData> {
    match &data.data {
        Some(dir) => {
            let bg = cfg.rig.background;
            ExperimentData::from_datasets(load_split(dir, Split::Train, bg)?, load_split(dir, Split::Test, bg)?)
        }
        None => {
            log::info!("rendering {} in memory", cfg.scene.kind());
            cfg.prepare()
        }
    }
}

fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        other => Err(Error::Input(format!("unknown split `{other}`"))),
    }
}

fn pick_split(data: &ExperimentData, split: Split) -> &Dataset {
    match split {
        Split::Train => &data.train,
        Split::Test => &data.test,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenScene { common, scene, fine_n } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = scene {
                let kind: SceneKind = s.parse()?;
                if kind != cfg.scene.kind() {
                    cfg.scene = SceneParams::default_for(kind);
                }
            }
            if let Some(n) = fine_n {
                cfg.fine_n = n;
            }
            if let Some(s) = common.seed {
                cfg.view_seed = s;
            }
            create_dir(&common.out)?;
            let data = cfg.prepare()?;
            let train = write_transforms_json(&common.out, &data.train)?;
            let test = write_transforms_json(&common.out, &data.test)?;
            let bbox = data.train.bbox.expect("generated scenes have a box");
            let manifest = SceneManifest {
                scene: cfg.scene,
                seed: cfg.view_seed,
                fine_n: cfg.fine_n,
                resolution: cfg.resolution,
                train_views: cfg.train_views,
                test_views: cfg.test_views,
                rig: cfg.rig,
                near: data.train.near,
                far: data.train.far,
                bbox,
            };
            write_json(&common.out.join("scene.json"), &serde_json::to_value(&manifest)?)?;
            write_manifest(&common.out, "gen-scene", &cfg, json!([train, test]))?;
            println!("wrote {} and {}", train.display(), test.display());
        }
        Command::Train { common, data } => {
            let cfg = load_config(&common)?;
            let data = load_data(&cfg, &data)?;
            create_dir(&common.out)?;
            let field_config = cfg.train.field_config();
            let params = FieldParams::<f32>::init(&field_config, cfg.train.seed)?;
            let outcome = train(&cfg.train, &data.rays, params);
            let (params, trace, failure) = match outcome {
                Ok(o) => (o.params, o.trace, None),
                Err(f) => (f.last_good, f.trace, Some(f.error)),
            };
            let field = RadianceField::from_parts(field_config, params)?;
            let ck = common.out.join("checkpoint.json");
            let trace_path = common.out.join("loss_trace.csv");
            save_checkpoint(&ck, &field)?;
            write_loss_trace(&trace_path, &trace)?;
            write_manifest(&common.out, "train", &cfg, json!([ck, trace_path]))?;
            if let Some(e) = failure {
                eprintln!("training stopped early; last good parameters saved to {}", ck.display());
                return Err(e);
            }
            if let Some(last) = trace.last() {
                println!("final recon {:.6} aniso {:.4} psnr_train {:.2}", last.recon, last.aniso, last.psnr_train);
            }
        }
        Command::Render {
            common,
            data,
            checkpoint,
            split,
        } => {
            let cfg = load_config(&common)?;
            let field = load_checkpoint::<f32>(&checkpoint)?;
            let data = load_data(&cfg, &data)?;
            let ds = pick_split(&data, parse_split(&split)?);
            create_dir(&common.out)?;
            let mut written = Vec::new();
            for (i, v) in ds.views.iter().enumerate() {
                let img = render_image(&field, ds, &v.camera, cfg.eval_samples)?;
                let p = common.out.join(format!("{split}_{i:03}.png"));
                write_png(&p, &img)?;
                written.push(p);
            }
            write_manifest(&common.out, "render", &cfg, json!(written))?;
            println!("rendered {} views", written.len());
        }
        Command::Eval {
            common,
            data,
            checkpoint,
            split,
        } => {
            let cfg = load_config(&common)?;
            let field = load_checkpoint::<f32>(&checkpoint)?;
            let data = load_data(&cfg, &data)?;
            let ds = pick_split(&data, parse_split(&split)?);
            create_dir(&common.out)?;
            let (report, _) = evaluate(&field, ds, cfg.eval_samples)?;
            let csv = common.out.join(format!("metrics_{split}.csv"));
            std::fs::write(&csv, report.to_csv()).map_err(|e| Error::io(&csv, e))?;
            let js = common.out.join(format!("eval_{split}.json"));
            write_json(&js, &serde_json::to_value(&report)?)?;
            write_manifest(&common.out, "eval", &cfg, json!([csv, js]))?;
            println!(
                "PSNR {:.3} dB  SSIM {:.4}  Avg-2 {:.5}",
                report.mean_psnr, report.mean_ssim, report.mean_avg_err
            );
        }
        Command::Sweep {
            common,
            data,
            axis,
            values,
            parallel,
        } => {
            let cfg = load_config(&common)?;
            let axis: SweepAxis = axis.parse()?;
            let data = load_data(&cfg, &data)?;
            create_dir(&common.out)?;
            let rows = cmd_sweep(&cfg.train, axis, &values, &data, cfg.eval_samples, parallel)?;
            let csv = sweep_csv(axis, &rows);
            let name = match axis {
                SweepAxis::DegreeL => "sweep_degree_L.csv",
                SweepAxis::Lambda => "sweep_lambda.csv",
            };
            let path = common.out.join(name);
            std::fs::write(&path, &csv).map_err(|e| Error::io(&path, e))?;
            write_manifest(&common.out, "sweep", &cfg, json!([path]))?;
            print!("{csv}");
        }
        Command::Gradcheck {
            common,
            trials,
            step,
            rays,
        } => {
            let mut cfg = load_config(&common)?;
            cfg.resolution = 16;
            cfg.train_views = 2;
            cfg.test_views = 2;
            cfg.fine_n = 256;
            let data = cfg.prepare()?;
            let field = RadianceField::<f64>::new(cfg.train.field_config(), cfg.train.seed)?;
            let (all_rays, targets) = dataset_rays::<f64>(&data.train)?;
            let picked: Vec<usize> = (0..all_rays.len())
                .filter(|&i| all_rays[i].is_some())
                .take(rays)
                .collect();
            let ray_batch: Vec<_> = picked.iter().map(|&i| all_rays[i]).collect();
            let target_batch: Vec<_> = picked.iter().map(|&i| targets[i]).collect();
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(cfg.train.seed);
            let samples = draw_samples(&ray_batch, cfg.train.samples_per_ray, SamplingMode::Stratified, &mut rng);
            let mut problem = RenderLossProblem::new(
                field,
                ray_batch,
                samples,
                target_batch,
                data.train.background,
                cfg.train.lambda,
            );
            let report = gradient_check(&mut problem, trials, step, cfg.train.seed)?;
            create_dir(&common.out)?;
            let path = common.out.join("gradcheck.json");
            write_json(&path, &serde_json::to_value(&report)?)?;
            write_manifest(&common.out, "gradcheck", &cfg, json!([path]))?;
            println!(
                "max relative error {:.3e} over {} parameters ({} skipped at ReLU kinks)",
                report.max_rel_error,
                report.entries.len(),
                report.skipped.len()
            );
            if report.max_rel_error >= 1e-4 {
                return Err(Error::Usage("gradient check exceeded 1e-4".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
