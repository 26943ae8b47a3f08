//! Adam with bias correction over named parameter blocks.

use crate::error::{Error, Result};
use crate::field::FieldParams;
use crate::real::Real;

/// A container of named flat parameter arrays.
pub trait ParamBlocks<T>: Clone {
    fn blocks(&self) -> Vec<(String, &[T])>;
    fn blocks_mut(&mut self) -> Vec<&mut [T]>;
    fn zeros_like(&self) -> Self;
}

impl<T: Real> ParamBlocks<T> for FieldParams<T> {
    fn blocks(&self) -> Vec<(String, &[T])> {
        FieldParams::blocks(self)
    }

    fn blocks_mut(&mut self) -> Vec<&mut [T]> {
        FieldParams::blocks_mut(self)
    }

    fn zeros_like(&self) -> Self {
        FieldParams::zeros_like(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<P> {
    pub first_moment: P,
    pub second_moment: P,
    pub step: u64,
    pub config: AdamConfig,
}

impl<P> AdamState<P> {
    pub fn new<T>(params: &P, config: AdamConfig) -> Self
    where
        P: ParamBlocks<T>,
    {
        Self {
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step: 0,
            config,
        }
    }
}

/// One Adam update. Gradients are checked for non-finite entries before any
/// parameter is touched.
pub fn adam_step<T: Real, P: ParamBlocks<T>>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState<P>,
    learning_rate: f64,
) -> Result<()> {
    let grad_blocks = grads.blocks();
    for (name, g) in &grad_blocks {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { block: name.clone() });
        }
    }
    let shapes_match = {
        let p = params.blocks();
        p.len() == grad_blocks.len() && p.iter().zip(&grad_blocks).all(|((_, a), (_, b))| a.len() == b.len())
    };
    if !shapes_match {
        return Err(Error::Usage("gradient blocks do not mirror parameter blocks".into()));
    }

    state.step += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let bias1 = 1.0 - beta1.powi(t);
    let bias2 = 1.0 - beta2.powi(t);
    let (b1, b2) = (T::of(beta1), T::of(beta2));
    let (one_b1, one_b2) = (T::of(1.0 - beta1), T::of(1.0 - beta2));
    let step_size = T::of(learning_rate / bias1);
    let inv_sqrt_bias2 = T::of(1.0 / bias2.sqrt());
    let eps = T::of(eps);

    let m_blocks = state.first_moment.blocks_mut();
    let v_blocks = state.second_moment.blocks_mut();
    for (((p, (_, g)), m), v) in params.blocks_mut().into_iter().zip(&grad_blocks).zip(m_blocks).zip(v_blocks) {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + one_b1 * gi;
            v[i] = b2 * v[i] + one_b2 * gi * gi;
            p[i] -= step_size * m[i] / (v[i].sqrt() * inv_sqrt_bias2 + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[derive(Debug, Clone, PartialEq)]
    struct Flat(Vec<f64>, Vec<f64>);

    impl ParamBlocks<f64> for Flat {
        fn blocks(&self) -> Vec<(String, &[f64])> {
            vec![("a".into(), &self.0), ("b".into(), &self.1)]
        }
        fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0, &mut self.1]
        }
        fn zeros_like(&self) -> Self {
            Flat(vec![0.0; self.0.len()], vec![0.0; self.1.len()])
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Flat(vec![1.0, -2.0], vec![0.5]);
        let before = p.clone();
        let g = p.zeros_like();
        let mut st = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &g, &mut st, 1e-3).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Flat(vec![0.0], vec![]);
        let g = Flat(vec![1.0], vec![]);
        let mut st = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &g, &mut st, 0.01).unwrap();
        assert!((p.0[0] + 0.01).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradient_names_the_block() {
        let mut p = Flat(vec![0.0], vec![0.0, 1.0]);
        let g = Flat(vec![0.0], vec![f64::NAN, 0.0]);
        let mut st = AdamState::new(&p, AdamConfig::default());
        match adam_step(&mut p, &g, &mut st, 0.01) {
            Err(Error::NonFiniteGradient { block }) => assert_eq!(block, "b"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(st.step, 0);
    }

    /// Textbook Adam written out separately.
    fn reference(params: &mut [f64], grads: &[Vec<f64>], lr: f64) {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let mut m = vec![0.0; params.len()];
        let mut v = vec![0.0; params.len()];
        for (t, g) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            for i in 0..params.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / (1.0 - b1.powi(t));
                let vh = v[i] / (1.0 - b2.powi(t));
                params[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }

    #[test]
    fn matches_reference_over_100_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let init: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grads: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let mut expected = init.clone();
        reference(&mut expected, &grads, 3e-3);

        let mut p = Flat(init[..3].to_vec(), init[3..].to_vec());
        let mut st = AdamState::new(&p, AdamConfig::default());
        for g in &grads {
            adam_step(&mut p, &Flat(g[..3].to_vec(), g[3..].to_vec()), &mut st, 3e-3).unwrap();
        }
        let got: Vec<f64> = p.0.iter().chain(&p.1).copied().collect();
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}
