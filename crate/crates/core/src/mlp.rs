//! Dense ReLU networks with a hand-written reverse pass.
//!
//! Batches are row-major `points x features`. The output layer is linear;
//! callers apply their own head activation.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    /// `inputs x outputs`.
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Linear<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// Uniform fan-in scaling `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`, zero bias.
    pub fn he_uniform(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / inputs as f64).sqrt();
        let weight = Array2::from_shape_fn((inputs, outputs), |_| {
            T::of(rng.gen_range(-bound..bound))
        });
        Self {
            weight,
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }
}

/// Layer widths of an MLP: input, hidden layers, output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpShape {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
}

impl MlpShape {
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input);
        w.extend_from_slice(&self.hidden);
        w.push(self.output);
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Linear<T>>,
}

/// Inputs seen by every layer during a forward pass, i.e. the network input
/// followed by each hidden activation.
#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    inputs: Vec<Array2<T>>,
}

impl<T: Real> MlpCache<T> {
    /// Which hidden units were active (positive after ReLU), layer by layer.
    pub fn relu_mask(&self) -> impl Iterator<Item = bool> + '_ {
        self.inputs[1..].iter().flat_map(|a| a.iter().map(|&v| v > T::zero()))
    }
}

impl<T: Real> Mlp<T> {
    pub fn zeros(shape: &MlpShape) -> Self {
        let w = shape.widths();
        Self {
            layers: w.windows(2).map(|p| Linear::zeros(p[0], p[1])).collect(),
        }
    }

    pub fn he_uniform(shape: &MlpShape, rng: &mut impl Rng) -> Self {
        let w = shape.widths();
        Self {
            layers: w
                .windows(2)
                .map(|p| Linear::he_uniform(p[0], p[1], rng))
                .collect(),
        }
    }

    pub fn shape(&self) -> MlpShape {
        let n = self.layers.len();
        MlpShape {
            input: self.layers[0].inputs(),
            hidden: self.layers[..n - 1].iter().map(|l| l.outputs()).collect(),
            output: self.layers[n - 1].outputs(),
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    fn check_input(&self, x: &ArrayView2<T>) -> Result<()> {
        if x.ncols() != self.input_width() {
            return Err(Error::Config(format!(
                "network expects {} input features, got {}",
                self.input_width(),
                x.ncols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Result<(Array2<T>, MlpCache<T>)> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight);
            z += &layer.bias;
            if i != last {
                z.mapv_inplace(|v| v.max(T::zero()));
            }
            inputs.push(h);
            h = z;
        }
        Ok((h, MlpCache { inputs }))
    }

    pub fn forward_inference(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_input(&x)?;
        let mut h: Array2<T> = x.dot(&self.layers[0].weight) + &self.layers[0].bias;
        for layer in &self.layers[1..] {
            h.mapv_inplace(|v| v.max(T::zero()));
            h = h.dot(&layer.weight);
            h += &layer.bias;
        }
        Ok(h)
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the network input.
    pub fn backward(
        &self,
        cache: &MlpCache<T>,
        d_out: Array2<T>,
        grads: &mut Mlp<T>,
    ) -> Result<Array2<T>> {
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::Usage(
                "forward cache does not belong to this network".into(),
            ));
        }
        if d_out.ncols() != self.output_width() || d_out.nrows() != cache.inputs[0].nrows() {
            return Err(Error::Usage(format!(
                "upstream gradient has shape {:?}, expected ({}, {})",
                d_out.dim(),
                cache.inputs[0].nrows(),
                self.output_width()
            )));
        }
        let mut dz = d_out;
        for i in (0..self.layers.len()).rev() {
            let input = &cache.inputs[i];
            let g = &mut grads.layers[i];
            ndarray::linalg::general_mat_mul(T::one(), &input.t(), &dz, T::one(), &mut g.weight);
            g.bias += &dz.sum_axis(Axis(0));
            let mut dx = dz.dot(&self.layers[i].weight.t());
            if i > 0 {
                // ReLU mask: the cached activation is positive exactly where
                // the pre-activation was.
                ndarray::Zip::from(&mut dx)
                    .and(input)
                    .for_each(|d, &a| {
                        if a <= T::zero() {
                            *d = T::zero();
                        }
                    });
            }
            dz = dx;
        }
        Ok(dz)
    }

    pub fn fill_zero(&mut self) {
        for l in &mut self.layers {
            l.weight.fill(T::zero());
            l.bias.fill(T::zero());
        }
    }

    /// Named flat views of every parameter array in declared order.
    pub fn blocks<'a>(&'a self, prefix: &str) -> Vec<(String, &'a [T])> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            out.push((
                format!("{prefix}.{i}.weight"),
                l.weight.as_slice().expect("standard layout"),
            ));
            out.push((
                format!("{prefix}.{i}.bias"),
                l.bias.as_slice().expect("standard layout"),
            ));
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Linear {
                    weight: l.weight.mapv(|v| U::of(v.f64())),
                    bias: l.bias.mapv(|v| U::of(v.f64())),
                })
                .collect(),
        }
    }
}
