//! Image quality metrics and per-dataset evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::field::RadianceField;
use crate::image_io::Image;
use crate::pipeline::render_image;
use crate::real::Real;

/// Reported in place of an infinite PSNR.
pub const PSNR_SENTINEL: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn check_shapes(a: &Image, b: &Image) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::Usage(format!(
            "image shapes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_shapes(a, b)?;
    if a.pixels.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(p, q)| (0..3).map(|c| (p[c] as f64 - q[c] as f64).powi(2)).sum::<f64>())
        .sum();
    Ok(sum / (3 * a.pixels.len()) as f64)
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_SENTINEL
    } else {
        (-10.0 * mse.log10()).min(PSNR_SENTINEL)
    }
}

/// `10 log10(1 / MSE)` over all pixels and channels.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let x = i as f64 - r;
            (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn grayscale(img: &Image) -> Vec<f64> {
    img.pixels
        .iter()
        .map(|p| (p[0] as f64 + p[1] as f64 + p[2] as f64) / 3.0)
        .collect()
}

/// Separable Gaussian filtering without padding: output is
/// `(h - 10) x (w - 10)`.
fn filter_valid(x: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for xo in 0..ow {
            rows[y * ow + xo] = (0..n).map(|j| k[j] * x[y * w + xo + j]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for yo in 0..oh {
        for xo in 0..ow {
            out[yo * ow + xo] = (0..n).map(|j| k[j] * rows[(yo + j) * ow + xo]).sum();
        }
    }
    out
}

/// Single-scale SSIM on the channel-mean grayscale image, averaged over all
/// window positions that fit inside the image.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_shapes(a, b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::Input(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            a.width, a.height
        )));
    }
    let (w, h) = (a.width, a.height);
    let k = gaussian_window();
    let x = grayscale(a);
    let y = grayscale(b);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let mx = filter_valid(&x, w, h, &k);
    let my = filter_valid(&y, w, h, &k);
    let sxx = filter_valid(&xx, w, h, &k);
    let syy = filter_valid(&yy, w, h, &k);
    let sxy = filter_valid(&xy, w, h, &k);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cxy = sxy[i] - ux * uy;
        total += ((2.0 * ux * uy + SSIM_C1) * (2.0 * cxy + SSIM_C2))
            / ((ux * ux + uy * uy + SSIM_C1) * (vx + vy + SSIM_C2));
    }
    Ok(total / mx.len() as f64)
}

/// "Avg-2": geometric mean of `10^(-psnr/10)` and `sqrt(1 - ssim)`.
pub fn avg_err(psnr: f64, ssim: f64) -> f64 {
    let a = 10f64.powf(-psnr / 10.0);
    let b = (1.0 - ssim).max(0.0).sqrt();
    (a * b).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub psnr: f64,
    pub ssim: f64,
    pub avg_err: f64,
}

impl ImageMetrics {
    pub fn compare(rendered: &Image, reference: &Image) -> Result<Self> {
        let psnr = psnr(rendered, reference)?;
        let ssim = ssim(rendered, reference)?;
        Ok(Self {
            psnr,
            ssim,
            avg_err: avg_err(psnr, ssim),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_image: Vec<ImageMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub mean_avg_err: f64,
}

impl EvalReport {
    pub fn from_images(per_image: Vec<ImageMetrics>) -> Self {
        let n = per_image.len().max(1) as f64;
        let mean = |f: fn(&ImageMetrics) -> f64| per_image.iter().map(f).sum::<f64>() / n;
        Self {
            mean_psnr: mean(|m| m.psnr),
            mean_ssim: mean(|m| m.ssim),
            mean_avg_err: mean(|m| m.avg_err),
            per_image,
        }
    }

    /// `image,psnr,ssim,avg2` rows followed by a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("image,psnr,ssim,avg2\n");
        for (i, m) in self.per_image.iter().enumerate() {
            s.push_str(&format!("{i},{:.6},{:.6},{:.6}\n", m.psnr, m.ssim, m.avg_err));
        }
        s.push_str(&format!(
            "mean,{:.6},{:.6},{:.6}\n",
            self.mean_psnr, self.mean_ssim, self.mean_avg_err
        ));
        s
    }
}

/// Renders every view of `dataset` and compares with its images.
pub fn evaluate<T: Real>(field: &RadianceField<T>, dataset: &Dataset, samples_per_ray: usize) -> Result<(EvalReport, Vec<Image>)> {
    let results: Vec<(ImageMetrics, Image)> = dataset
        .views
        .par_iter()
        .map(|v| {
            let img = render_image(field, dataset, &v.camera, samples_per_ray)?;
            Ok((ImageMetrics::compare(&img, &v.image)?, img))
        })
        .collect::<Result<_>>()?;
    let (metrics, images) = results.into_iter().unzip();
    Ok((EvalReport::from_images(metrics), images))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_pixels(w, h, (0..w * h).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect()).unwrap()
    }

    fn test_card(w: usize, h: usize) -> Image {
        let pixels = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                let v = if (x / 4 + y / 4) % 2 == 0 { 0.9 } else { 0.1 };
                let g = x as f32 / w as f32;
                [v, 0.5 * v + 0.5 * g, v]
            })
            .collect();
        Image::from_pixels(w, h, pixels).unwrap()
    }

    #[test]
    fn psnr_cases() {
        let a = Image::new(4, 4, [0.5; 3]);
        let b = Image::new(4, 4, [0.6; 3]);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-5);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_SENTINEL);
        assert!(matches!(psnr(&a, &Image::new(4, 3, [0.0; 3])), Err(Error::Usage(_))));
    }

    #[test]
    fn psnr_matches_naive() {
        let a = random_image(9, 7, 1);
        let b = random_image(9, 7, 2);
        let mut acc = 0.0f64;
        for (p, q) in a.pixels.iter().zip(&b.pixels) {
            for c in 0..3 {
                acc += (p[c] as f64 - q[c] as f64).powi(2);
            }
        }
        let expected = 10.0 * (1.0 / (acc / (9.0 * 7.0 * 3.0))).log10();
        assert!((psnr(&a, &b).unwrap() - expected).abs() < 1e-12);
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let a = random_image(20, 16, 3);
        let b = random_image(20, 16, 4);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let (ab, ba) = (ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        assert!((ab - ba).abs() < 1e-12);
        assert!((-1.0..=1.0).contains(&ab));
    }

    /// Plain 2-D windowed SSIM, written without separable filtering.
    fn naive_ssim(a: &Image, b: &Image) -> f64 {
        let k1 = gaussian_window();
        let (w, h) = (a.width, a.height);
        let x = grayscale(a);
        let y = grayscale(b);
        let mut total = 0.0;
        let mut count = 0;
        for oy in 0..=h - 11 {
            for ox in 0..=w - 11 {
                let (mut ux, mut uy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for j in 0..11 {
                    for i in 0..11 {
                        let wgt = k1[i] * k1[j];
                        let p = x[(oy + j) * w + ox + i];
                        let q = y[(oy + j) * w + ox + i];
                        ux += wgt * p;
                        uy += wgt * q;
                        sxx += wgt * p * p;
                        syy += wgt * q * q;
                        sxy += wgt * p * q;
                    }
                }
                let (vx, vy, cxy) = (sxx - ux * ux, syy - uy * uy, sxy - ux * uy);
                total += ((2.0 * ux * uy + SSIM_C1) * (2.0 * cxy + SSIM_C2))
                    / ((ux * ux + uy * uy + SSIM_C1) * (vx + vy + SSIM_C2));
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn ssim_matches_naive_windowing() {
        let a = random_image(17, 13, 5);
        let b = random_image(17, 13, 6);
        assert!((ssim(&a, &b).unwrap() - naive_ssim(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn negative_of_a_test_card_scores_low() {
        let a = test_card(32, 32);
        let neg = Image::from_pixels(32, 32, a.pixels.iter().map(|p| p.map(|v| 1.0 - v)).collect()).unwrap();
        let s = ssim(&a, &neg).unwrap();
        assert!(s < 0.5, "{s}");
        assert!((s - naive_ssim(&a, &neg)).abs() < 1e-12);
    }

    #[test]
    fn constant_images_reduce_to_luminance_term() {
        let (u, v) = (0.3f64, 0.7f64);
        let a = Image::new(12, 12, [u as f32; 3]);
        let b = Image::new(12, 12, [v as f32; 3]);
        let (u, v) = (u as f32 as f64, v as f32 as f64);
        let expected = (2.0 * u * v + SSIM_C1) / (u * u + v * v + SSIM_C1);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn small_images_are_rejected() {
        let a = Image::new(10, 12, [0.0; 3]);
        assert!(matches!(ssim(&a, &a), Err(Error::Input(_))));
    }

    #[test]
    fn avg_err_cases() {
        assert_eq!(avg_err(PSNR_SENTINEL, 1.0), 0.0);
        assert!((avg_err(20.0, 0.96) - 0.002f64.sqrt()).abs() < 1e-12);
        let reports = [(25.0, 0.9), (31.0, 0.97), (18.5, 0.6)];
        for (p, s) in reports {
            let naive = (10f64.powf(-p / 10.0) * (1.0 - s as f64).sqrt()).sqrt();
            assert!((avg_err(p, s) - naive).abs() < 1e-15);
        }
    }

    #[test]
    fn report_means_are_arithmetic() {
        let r = EvalReport::from_images(vec![
            ImageMetrics {
                psnr: 20.0,
                ssim: 0.5,
                avg_err: 0.1,
            },
            ImageMetrics {
                psnr: 30.0,
                ssim: 0.9,
                avg_err: 0.3,
            },
        ]);
        assert_eq!(r.mean_psnr, 25.0);
        assert!((r.mean_ssim - 0.7).abs() < 1e-15);
        assert!(r.to_csv().ends_with("mean,25.000000,0.700000,0.200000\n"));
    }
}
