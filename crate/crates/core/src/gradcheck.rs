//! Central finite differences against analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::Ray;
use crate::error::{Error, Result};
use crate::field::{FieldInputs, FieldParams, RadianceField};
use crate::pipeline::loss_and_gradients;
use crate::render::SampleSet;

/// Denominator floor of the relative error, so that parameters whose true
/// gradient is zero compare on absolute error.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// A scalar objective over a flat parameter vector.
pub trait Differentiable {
    fn num_params(&self) -> usize;
    fn param(&self, i: usize) -> f64;
    fn set_param(&mut self, i: usize, value: f64);
    fn param_name(&self, i: usize) -> String {
        format!("p{i}")
    }
    fn loss(&self) -> Result<f64>;
    fn gradient(&self) -> Result<Vec<f64>>;
    /// Identifies the smooth piece of a piecewise-smooth objective, such as
    /// the ReLU activation pattern. Central differences are only compared
    /// where both perturbed points stay on the piece of the unperturbed one.
    fn branch_pattern(&self) -> Result<Option<Vec<bool>>> {
        Ok(None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckEntry {
    pub param: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_error: f64,
    /// Parameters passed over because a perturbation crossed a kink.
    pub skipped: Vec<String>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares `trials` randomly chosen parameters using central differences of
/// half-width `step`. A parameter whose perturbation changes the objective's
/// branch pattern is skipped and replaced by another random draw.
pub fn gradient_check<M: Differentiable>(model: &mut M, trials: usize, step: f64, seed: u64) -> Result<GradCheckReport> {
    let n = model.num_params();
    if n == 0 {
        return Err(Error::Input("model has no parameters".into()));
    }
    let grad = model.gradient()?;
    let base = model.branch_pattern()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = rand::seq::index::sample(&mut rng, n, n).into_vec();
    let mut entries = Vec::with_capacity(trials.min(n));
    let mut skipped = Vec::new();
    for i in order {
        if entries.len() == trials {
            break;
        }
        let orig = model.param(i);
        model.set_param(i, orig + step);
        let plus = model.loss()?;
        let smooth_plus = model.branch_pattern()? == base;
        model.set_param(i, orig - step);
        let minus = model.loss()?;
        let smooth_minus = model.branch_pattern()? == base;
        model.set_param(i, orig);
        if !(smooth_plus && smooth_minus) {
            skipped.push(model.param_name(i));
            continue;
        }
        let numeric = (plus - minus) / (2.0 * step);
        entries.push(GradCheckEntry {
            param: model.param_name(i),
            analytic: grad[i],
            numeric,
            rel_error: relative_error(grad[i], numeric),
        });
    }
    let max_rel_error = entries.iter().map(|e| e.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        entries,
        max_rel_error,
        skipped,
    })
}

/// The full pipeline: field, volume rendering and the total loss over a
/// fixed ray batch with fixed sample distances.
pub struct RenderLossProblem {
    pub field: RadianceField<f64>,
    pub rays: Vec<Option<Ray>>,
    pub samples: Vec<SampleSet>,
    pub targets: Vec<[f64; 3]>,
    pub background: [f64; 3],
    pub lambda: f64,
    index: Vec<(usize, usize)>,
    names: Vec<String>,
}

impl RenderLossProblem {
    pub fn new(
        field: RadianceField<f64>,
        rays: Vec<Option<Ray>>,
        samples: Vec<SampleSet>,
        targets: Vec<[f64; 3]>,
        background: [f64; 3],
        lambda: f64,
    ) -> Self {
        let mut index = Vec::new();
        let mut names = Vec::new();
        for (b, (name, values)) in field.params.blocks().into_iter().enumerate() {
            for j in 0..values.len() {
                index.push((b, j));
            }
            names.push(name);
        }
        Self {
            field,
            rays,
            samples,
            targets,
            background,
            lambda,
            index,
            names,
        }
    }

    fn flatten(&self, p: &FieldParams<f64>) -> Vec<f64> {
        p.blocks().into_iter().flat_map(|(_, v)| v.to_vec()).collect()
    }
}

impl Differentiable for RenderLossProblem {
    fn num_params(&self) -> usize {
        self.index.len()
    }

    fn param(&self, i: usize) -> f64 {
        let (b, j) = self.index[i];
        self.field.params.blocks()[b].1[j]
    }

    fn set_param(&mut self, i: usize, value: f64) {
        let (b, j) = self.index[i];
        self.field.params.blocks_mut()[b][j] = value;
    }

    fn param_name(&self, i: usize) -> String {
        let (b, j) = self.index[i];
        format!("{}[{j}]", self.names[b])
    }

    fn loss(&self) -> Result<f64> {
        let out = loss_and_gradients(&self.field, &self.rays, &self.samples, &self.targets, self.background, self.lambda)?;
        Ok(out.report.expect("loss requested").total)
    }

    fn gradient(&self) -> Result<Vec<f64>> {
        let out = loss_and_gradients(&self.field, &self.rays, &self.samples, &self.targets, self.background, self.lambda)?;
        Ok(self.flatten(&out.grads.expect("gradients requested")))
    }

    fn branch_pattern(&self) -> Result<Option<Vec<bool>>> {
        let mut positions = Vec::new();
        let mut directions = Vec::new();
        let mut ray_of = Vec::new();
        for (r, s) in self.rays.iter().zip(&self.samples) {
            let Some(r) = r else { continue };
            for &t in &s.t {
                positions.push(r.at(t));
                ray_of.push(directions.len());
            }
            directions.push(r.direction);
        }
        if positions.is_empty() {
            return Ok(Some(Vec::new()));
        }
        let inputs = FieldInputs::from_rays(&self.field.config, &positions, &directions, |i| ray_of[i])?;
        let (_, cache) = self.field.forward(&inputs)?;
        Ok(Some(cache.relu_mask()))
    }
}

/// Sum of squared residuals of a linear model `y = w . x`.
pub struct LinearToy {
    pub weights: Vec<f64>,
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
}

impl Differentiable for LinearToy {
    fn num_params(&self) -> usize {
        self.weights.len()
    }

    fn param(&self, i: usize) -> f64 {
        self.weights[i]
    }

    fn set_param(&mut self, i: usize, value: f64) {
        self.weights[i] = value;
    }

    fn loss(&self) -> Result<f64> {
        Ok(self
            .inputs
            .iter()
            .zip(&self.outputs)
            .map(|(x, y)| {
                let r = x.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>() - y;
                r * r
            })
            .sum())
    }

    fn gradient(&self) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.weights.len()];
        for (x, y) in self.inputs.iter().zip(&self.outputs) {
            let r = x.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>() - y;
            for (gi, a) in g.iter_mut().zip(x) {
                *gi += 2.0 * r * a;
            }
        }
        Ok(g)
    }
}

impl LinearToy {
    pub fn random(params: usize, points: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            weights: (0..params).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            inputs: (0..points)
                .map(|_| (0..params).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
            outputs: (0..points).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }
}
