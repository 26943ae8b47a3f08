//! Sinusoidal input encoding for positions and directions.

use serde::{Deserialize, Serialize};

use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionalEncodingConfig {
    pub num_frequencies_position: usize,
    pub num_frequencies_direction: usize,
    pub include_input: bool,
}

impl Default for PositionalEncodingConfig {
    fn default() -> Self {
        Self {
            num_frequencies_position: 10,
            num_frequencies_direction: 4,
            include_input: true,
        }
    }
}

impl PositionalEncodingConfig {
    pub fn position_width(&self) -> usize {
        encoded_width(self.num_frequencies_position, self.include_input)
    }

    pub fn direction_width(&self) -> usize {
        encoded_width(self.num_frequencies_direction, self.include_input)
    }
}

pub fn encoded_width(num_frequencies: usize, include_input: bool) -> usize {
    3 * (include_input as usize + 2 * num_frequencies)
}

/// Writes `[x, sin(2^0 x), cos(2^0 x), ..., sin(2^{F-1} x), cos(2^{F-1} x)]`
/// into `out`, each block holding three components.
pub fn encode_into<T: Real>(x: [T; 3], num_frequencies: usize, include_input: bool, out: &mut [T]) {
    debug_assert_eq!(out.len(), encoded_width(num_frequencies, include_input));
    let mut o = 0;
    if include_input {
        out[..3].copy_from_slice(&x);
        o = 3;
    }
    let mut freq = T::one();
    for _ in 0..num_frequencies {
        for (k, v) in x.iter().enumerate() {
            let (s, c) = (*v * freq).sin_cos();
            out[o + k] = s;
            out[o + 3 + k] = c;
        }
        o += 6;
        freq = freq + freq;
    }
}

pub fn encode<T: Real>(x: [T; 3], num_frequencies: usize, include_input: bool) -> Vec<T> {
    let mut out = vec![T::zero(); encoded_width(num_frequencies, include_input)];
    encode_into(x, num_frequencies, include_input, &mut out);
    out
}

pub fn encode_position<T: Real>(x: [T; 3], cfg: &PositionalEncodingConfig) -> Vec<T> {
    encode(x, cfg.num_frequencies_position, cfg.include_input)
}

pub fn encode_direction<T: Real>(d: [T; 3], cfg: &PositionalEncodingConfig) -> Vec<T> {
    encode(d, cfg.num_frequencies_direction, cfg.include_input)
}
