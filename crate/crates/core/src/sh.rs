//! Real spherical harmonics.
//!
//! Fully orthonormal real basis with the Condon-Shortley phase folded into the
//! associated Legendre functions (the sign convention used by most graphics
//! code, e.g. `Y_1^{-1} = -c * y`). Entries are stored flat at index
//! `l * (l + 1) + m`. Degrees up to 4 use closed-form polynomials, higher
//! degrees use the associated Legendre recurrence.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Highest degree accepted by [`eval_sh_basis`].
pub const MAX_SH_DEGREE: usize = 8;

/// Highest degree with hard-coded polynomials.
const CLOSED_FORM_DEGREE: usize = 4;

/// `Y_0^0 = 1 / (2 sqrt(pi))`.
pub const Y00: f64 = 0.282_094_791_773_878_14;

/// Number of real SH functions with degree at most `degree`.
pub const fn num_sh_coeffs(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Flat index of `Y_l^m`.
#[inline]
pub const fn sh_index(l: usize, m: isize) -> usize {
    ((l * (l + 1)) as isize + m) as usize
}

/// A unit-length direction. The constructor normalizes its input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    x: f64,
    y: f64,
    z: f64,
}

impl Direction {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n == 0.0 {
            return Err(Error::Input(format!(
                "cannot normalize direction ({x}, {y}, {z})"
            )));
        }
        Ok(Self {
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    pub fn from_array(v: [f64; 3]) -> Result<Self> {
        Self::new(v[0], v[1], v[2])
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl std::ops::Neg for Direction {
    type Output = Direction;

    fn neg(self) -> Direction {
        Direction {
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }
}

/// All real SH values up to `degree` at one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct ShBasis {
    values: Vec<f64>,
    degree: usize,
}

impl ShBasis {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Degree-0 value and the view-dependent remainder.
    pub fn split_isotropic(&self) -> (f64, &[f64]) {
        split_isotropic(&self.values)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Splits a flat basis vector into its constant term and the `l >= 1` tail.
pub fn split_isotropic(values: &[f64]) -> (f64, &[f64]) {
    (values[0], &values[1..])
}

pub fn eval_sh_basis(dir: Direction, degree: usize) -> Result<ShBasis> {
    let mut values = vec![0.0; num_sh_coeffs(degree)];
    eval_sh_basis_into(dir, degree, &mut values)?;
    Ok(ShBasis { values, degree })
}

/// Writes the `(degree + 1)^2` basis values into `out`.
pub fn eval_sh_basis_into(dir: Direction, degree: usize, out: &mut [f64]) -> Result<()> {
    if degree > MAX_SH_DEGREE {
        return Err(Error::Config(format!(
            "SH degree {degree} exceeds the supported maximum {MAX_SH_DEGREE}"
        )));
    }
    if out.len() != num_sh_coeffs(degree) {
        return Err(Error::Config(format!(
            "SH output buffer has {} entries, degree {degree} needs {}",
            out.len(),
            num_sh_coeffs(degree)
        )));
    }
    let closed = degree.min(CLOSED_FORM_DEGREE);
    eval_closed_form(dir, closed, &mut out[..num_sh_coeffs(closed)]);
    if degree > CLOSED_FORM_DEGREE {
        let mut full = vec![0.0; num_sh_coeffs(degree)];
        eval_sh_recurrence(dir, degree, &mut full);
        let start = num_sh_coeffs(CLOSED_FORM_DEGREE);
        out[start..].copy_from_slice(&full[start..]);
    }
    Ok(())
}

fn eval_closed_form(dir: Direction, degree: usize, out: &mut [f64]) {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    out[0] = Y00;
    if degree < 1 {
        return;
    }
    const C1: f64 = 0.488_602_511_902_919_9;
    out[1] = -C1 * y;
    out[2] = C1 * z;
    out[3] = -C1 * x;
    if degree < 2 {
        return;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    out[4] = 1.092_548_430_592_079_2 * xy;
    out[5] = -1.092_548_430_592_079_2 * yz;
    out[6] = 0.315_391_565_252_520_05 * (2.0 * zz - xx - yy);
    out[7] = -1.092_548_430_592_079_2 * xz;
    out[8] = 0.546_274_215_296_039_6 * (xx - yy);
    if degree < 3 {
        return;
    }
    out[9] = -0.590_043_589_926_643_5 * y * (3.0 * xx - yy);
    out[10] = 2.890_611_442_640_554 * xy * z;
    out[11] = -0.457_045_799_464_465_8 * y * (4.0 * zz - xx - yy);
    out[12] = 0.373_176_332_590_115_4 * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = -0.457_045_799_464_465_8 * x * (4.0 * zz - xx - yy);
    out[14] = 1.445_305_721_320_277 * z * (xx - yy);
    out[15] = -0.590_043_589_926_643_5 * x * (xx - 3.0 * yy);
    if degree < 4 {
        return;
    }
    out[16] = 2.503_342_941_796_704_6 * xy * (xx - yy);
    out[17] = -1.770_130_769_779_930_4 * yz * (3.0 * xx - yy);
    out[18] = 0.946_174_695_757_560_1 * xy * (7.0 * zz - 1.0);
    out[19] = -0.669_046_543_557_289_2 * yz * (7.0 * zz - 3.0);
    out[20] = 0.105_785_546_915_204_31 * (35.0 * zz * zz - 30.0 * zz + 3.0);
    out[21] = -0.669_046_543_557_289_2 * xz * (7.0 * zz - 3.0);
    out[22] = 0.473_087_347_878_780_04 * (xx - yy) * (7.0 * zz - 1.0);
    out[23] = -1.770_130_769_779_930_4 * xz * (xx - 3.0 * yy);
    out[24] = 0.625_835_735_449_176_1 * (xx * (xx - 3.0 * yy) - yy * (3.0 * xx - yy));
}

/// General-degree evaluation through the associated Legendre recurrence.
///
/// `(1 - z^2)^{m/2} cos(m phi)` and its sine partner are taken as the real and
/// imaginary parts of `(x + i y)^m`, which keeps the poles regular.
pub fn eval_sh_recurrence(dir: Direction, degree: usize, out: &mut [f64]) {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let n = degree + 1;
    // q[l][m]: associated Legendre P_l^m(z) divided by (1 - z^2)^{m/2},
    // including the (-1)^m phase.
    let mut q = vec![vec![0.0; n]; n];
    let mut pmm = 1.0;
    for m in 0..n {
        if m > 0 {
            pmm *= -((2 * m - 1) as f64);
        }
        q[m][m] = pmm;
        if m + 1 < n {
            q[m + 1][m] = z * (2 * m + 1) as f64 * pmm;
        }
        for l in (m + 2)..n {
            q[l][m] = ((2 * l - 1) as f64 * z * q[l - 1][m] - (l + m - 1) as f64 * q[l - 2][m])
                / (l - m) as f64;
        }
    }
    // Real/imaginary parts of (x + i y)^m.
    let mut cos_m = vec![1.0; n];
    let mut sin_m = vec![0.0; n];
    for m in 1..n {
        cos_m[m] = cos_m[m - 1] * x - sin_m[m - 1] * y;
        sin_m[m] = sin_m[m - 1] * x + cos_m[m - 1] * y;
    }
    for l in 0..n {
        for m in 0..=l {
            let k = normalization(l, m);
            if m == 0 {
                out[sh_index(l, 0)] = k * q[l][0];
            } else {
                let s = std::f64::consts::SQRT_2 * k * q[l][m];
                out[sh_index(l, m as isize)] = s * cos_m[m];
                out[sh_index(l, -(m as isize))] = s * sin_m[m];
            }
        }
    }
}

/// `sqrt((2l + 1) / (4 pi) * (l - m)! / (l + m)!)`.
fn normalization(l: usize, m: usize) -> f64 {
    let mut ratio = 1.0;
    for k in (l - m + 1)..=(l + m) {
        ratio /= k as f64;
    }
    ((2 * l + 1) as f64 / (4.0 * PI) * ratio).sqrt()
}
