//! Linear-RGB images and 8-bit sRGB PNG codecs.

use std::path::Path;

use crate::error::{Error, Result};

/// Linear RGB, row-major, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f32; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize, fill: [f32; 3]) -> Self {
        Self {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<[f32; 3]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Input(format!(
                "{} pixels do not fill a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        self.pixels[y * self.width + x]
    }

    /// Pixels after an 8-bit sRGB round trip.
    pub fn quantized(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            pixels: self
                .pixels
                .iter()
                .map(|p| p.map(|v| srgb_byte_to_linear(linear_to_srgb_byte(v as f64)) as f32))
                .collect(),
        }
    }
}

/// sRGB opto-electronic transfer function on `[0, 1]`.
pub fn linear_to_srgb(v: f64) -> f64 {
    let v = v.clamp(0.0, 1.0);
    if v <= 0.003_130_8 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

pub fn srgb_to_linear(v: f64) -> f64 {
    let v = v.clamp(0.0, 1.0);
    if v <= 0.040_45 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

pub fn linear_to_srgb_byte(v: f64) -> u8 {
    (linear_to_srgb(v) * 255.0).round() as u8
}

pub fn srgb_byte_to_linear(b: u8) -> f64 {
    srgb_to_linear(b as f64 / 255.0)
}

pub fn write_png(path: &Path, image: &Image) -> Result<()> {
    let mut buf = Vec::with_capacity(image.pixels.len() * 3);
    for p in &image.pixels {
        for &c in p {
            buf.push(linear_to_srgb_byte(c as f64));
        }
    }
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    image::save_buffer(
        path,
        &buf,
        image.width as u32,
        image.height as u32,
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| Error::Image {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Reads an 8-bit RGB or RGBA PNG. Alpha is composited onto `background`
/// (linear RGB) after decoding to linear values.
pub fn read_png(path: &Path, background: [f64; 3]) -> Result<Image> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let rgba = img.to_rgba8();
    let (w, h) = rgba.dimensions();
    let pixels = rgba
        .pixels()
        .map(|p| {
            let a = p[3] as f64 / 255.0;
            [0, 1, 2].map(|c| {
                let lin = srgb_byte_to_linear(p[c]);
                if p[3] == 255 {
                    lin as f32
                } else {
                    (lin * a + background[c] * (1.0 - a)) as f32
                }
            })
        })
        .collect();
    Image::from_pixels(w as usize, h as usize, pixels)
}
