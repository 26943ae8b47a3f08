//! A plain isotropic radiance-field trainer written with scalar f64 loops.
//!
//! It shares nothing with the library's field, renderer, loss or optimizer
//! code: densities come from a single softplus output, colors from a sigmoid
//! head on `[feature, encoded direction]`, the compositing gradient is
//! expanded directly from its definition, and Adam is written out by hand.
//! Only the initial weights and the random stream are shared, so that the
//! two trainers see identical batches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use anisonerf::camera::Ray;

const Y00: f64 = 0.282_094_791_773_878_14;

#[derive(Clone)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `inputs x outputs`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            w: vec![0.0; inputs * outputs],
            b: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| self.b[o] + (0..self.inputs).map(|i| x[i] * self.w[i * self.outputs + o]).sum::<f64>())
            .collect()
    }
}

pub type Net = Vec<Layer>;

fn zeros_like(net: &Net) -> Net {
    net.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect()
}

/// Forward pass keeping every layer input. ReLU between layers, none after
/// the last.
fn net_forward(net: &Net, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut acts = Vec::with_capacity(net.len());
    let mut h = x.to_vec();
    for (i, l) in net.iter().enumerate() {
        let mut z = l.apply(&h);
        if i + 1 < net.len() {
            for v in &mut z {
                *v = v.max(0.0);
            }
        }
        acts.push(h);
        h = z;
    }
    (h, acts)
}

fn net_backward(net: &Net, acts: &[Vec<f64>], d_out: &[f64], grads: &mut Net) -> Vec<f64> {
    let mut dz = d_out.to_vec();
    for i in (0..net.len()).rev() {
        let l = &net[i];
        let g = &mut grads[i];
        let x = &acts[i];
        for o in 0..l.outputs {
            g.b[o] += dz[o];
            for k in 0..l.inputs {
                g.w[k * l.outputs + o] += x[k] * dz[o];
            }
        }
        let mut dx: Vec<f64> = (0..l.inputs)
            .map(|k| (0..l.outputs).map(|o| l.w[k * l.outputs + o] * dz[o]).sum())
            .collect();
        if i > 0 {
            for (d, a) in dx.iter_mut().zip(x) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        dz = dx;
    }
    dz
}

fn encode(x: [f64; 3], freqs: usize) -> Vec<f64> {
    let mut out = x.to_vec();
    for f in 0..freqs {
        let s = 2f64.powi(f as i32);
        out.extend(x.iter().map(|v| (v * s).sin()));
        out.extend(x.iter().map(|v| (v * s).cos()));
    }
    out
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub struct IsotropicNerf {
    pub geometry: Net,
    pub color: Net,
    pub pos_freqs: usize,
    pub dir_freqs: usize,
}

struct Point {
    sigma: f64,
    rgb: [f64; 3],
    raw_density: f64,
    geo_out: Vec<f64>,
    geo_acts: Vec<Vec<f64>>,
    col_out: Vec<f64>,
    col_acts: Vec<Vec<f64>>,
}

impl IsotropicNerf {
    fn point(&self, x: [f64; 3], dir_features: &[f64]) -> Point {
        let (geo_out, geo_acts) = net_forward(&self.geometry, &encode(x, self.pos_freqs));
        let raw_density = geo_out[0] * Y00;
        let feature: Vec<f64> = geo_out[1..].iter().map(|w| w * Y00).collect();
        let mut color_in = feature;
        color_in.extend_from_slice(dir_features);
        let (col_out, col_acts) = net_forward(&self.color, &color_in);
        Point {
            sigma: softplus(raw_density),
            rgb: [sigmoid(col_out[0]), sigmoid(col_out[1]), sigmoid(col_out[2])],
            raw_density,
            geo_out,
            geo_acts,
            col_out,
            col_acts,
        }
    }

    /// Rendered color of one ray and, when `d_rgb` is given, the gradient
    /// of `d_rgb . rgb` accumulated into `grads`.
    fn ray(
        &self,
        ray: &Ray,
        t: &[f64],
        delta: &[f64],
        background: [f64; 3],
        d_rgb: Option<[f64; 3]>,
        grads: Option<(&mut Net, &mut Net)>,
    ) -> [f64; 3] {
        let dir = ray.direction.to_array();
        let dir_features = encode(dir, self.dir_freqs);
        let pts: Vec<Point> = t.iter().map(|&ti| self.point(ray.at(ti), &dir_features)).collect();
        let n = pts.len();
        let alpha: Vec<f64> = (0..n).map(|i| 1.0 - (-pts[i].sigma * delta[i]).exp()).collect();
        let mut trans = vec![1.0; n + 1];
        for i in 0..n {
            trans[i + 1] = trans[i] * (1.0 - alpha[i]);
        }
        let mut rgb = [0.0; 3];
        for c in 0..3 {
            rgb[c] = (0..n).map(|i| trans[i] * alpha[i] * pts[i].rgb[c]).sum::<f64>() + trans[n] * background[c];
        }
        let (Some(g), Some((g_geo, g_col))) = (d_rgb, grads) else {
            return rgb;
        };
        let dot = |v: [f64; 3]| g[0] * v[0] + g[1] * v[1] + g[2] * v[2];
        for k in 0..n {
            // d rgb / d sigma_k, expanded term by term.
            let later: f64 = (k + 1..n).map(|i| trans[i] * alpha[i] * dot(pts[i].rgb)).sum();
            let d_sigma = delta[k] * (trans[k + 1] * dot(pts[k].rgb) - later - trans[n] * dot(background));
            let w = trans[k] * alpha[k];
            let d_logits: Vec<f64> = (0..3)
                .map(|c| {
                    let s = sigmoid(pts[k].col_out[c]);
                    w * g[c] * s * (1.0 - s)
                })
                .collect();
            let d_color_in = net_backward(&self.color, &pts[k].col_acts, &d_logits, g_col);
            let mut d_geo = vec![0.0; pts[k].geo_out.len()];
            d_geo[0] = d_sigma * sigmoid(pts[k].raw_density) * Y00;
            for j in 1..d_geo.len() {
                d_geo[j] = d_color_in[j - 1] * Y00;
            }
            net_backward(&self.geometry, &pts[k].geo_acts, &d_geo, g_geo);
        }
        rgb
    }
}

pub struct ReferenceConfig {
    pub batch_rays: usize,
    pub samples_per_ray: usize,
    pub iterations: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub learning_rate_final: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

fn params_mut(nets: [&mut Net; 2]) -> Vec<&mut f64> {
    let mut out = Vec::new();
    for net in nets {
        for l in net.iter_mut() {
            out.extend(l.w.iter_mut());
            out.extend(l.b.iter_mut());
        }
    }
    out
}

fn grads_flat(nets: [&Net; 2]) -> Vec<f64> {
    let mut out = Vec::new();
    for net in nets {
        for l in net {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
    }
    out
}

/// Trains and returns the per-iteration reconstruction loss.
pub fn train_reference(
    model: &mut IsotropicNerf,
    config: &ReferenceConfig,
    rays: &[Option<Ray>],
    targets: &[[f64; 3]],
    background: [f64; 3],
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_params = grads_flat([&model.geometry, &model.color]).len();
    let mut adam = Adam {
        m: vec![0.0; n_params],
        v: vec![0.0; n_params],
        step: 0,
    };
    let mut trace = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let idx: Vec<usize> = (0..config.batch_rays).map(|_| rng.gen_range(0..rays.len())).collect();
        let mut samples = Vec::with_capacity(idx.len());
        for &i in &idx {
            samples.push(rays[i].map(|ray| {
                let n = config.samples_per_ray;
                let width = (ray.t_far - ray.t_near) / n as f64;
                let t: Vec<f64> = (0..n).map(|j| ray.t_near + (j as f64 + rng.gen::<f64>()) * width).collect();
                let delta: Vec<f64> = (0..n)
                    .map(|j| if j + 1 < n { t[j + 1] - t[j] } else { ray.t_far - t[j] })
                    .collect();
                (t, delta)
            }));
        }

        let mut g_geo = zeros_like(&model.geometry);
        let mut g_col = zeros_like(&model.color);
        let mut loss = 0.0;
        let r = idx.len() as f64;
        for (&i, s) in idx.iter().zip(&samples) {
            let target = targets[i];
            let Some(ray) = rays[i] else {
                let e: f64 = (0..3).map(|c| (background[c] - target[c]).powi(2)).sum();
                loss += e / r;
                continue;
            };
            let (t, delta) = s.as_ref().unwrap();
            let rgb = model.ray(&ray, t, delta, background, None, None);
            let diff = [0, 1, 2].map(|c| rgb[c] - target[c]);
            loss += diff.iter().map(|d| d * d).sum::<f64>() / r;
            let d_rgb = diff.map(|d| 2.0 * d / r);
            model.ray(&ray, t, delta, background, Some(d_rgb), Some((&mut g_geo, &mut g_col)));
        }
        trace.push(loss);

        let lr = config.learning_rate
            * (config.learning_rate_final / config.learning_rate).powf(it as f64 / config.iterations.max(1) as f64);
        let g = grads_flat([&g_geo, &g_col]);
        adam.step += 1;
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let c1 = 1.0 - b1.powi(adam.step);
        let c2 = 1.0 - b2.powi(adam.step);
        for (j, p) in params_mut([&mut model.geometry, &mut model.color]).into_iter().enumerate() {
            adam.m[j] = b1 * adam.m[j] + (1.0 - b1) * g[j];
            adam.v[j] = b2 * adam.v[j] + (1.0 - b2) * g[j] * g[j];
            let m_hat = adam.m[j] / c1;
            let v_hat = adam.v[j] / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    trace
}
