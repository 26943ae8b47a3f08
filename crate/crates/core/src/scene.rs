//! Closed-form scenes used as rendering ground truth.
//!
//! `anisotropic_slats` is a louvre: a vertical stack of thin tilted strips.
//! Looking along the tilt the stack is mostly see-through, looking across it
//! is opaque, and the upper and lower faces of each strip carry different
//! colors, so which face is visible depends on the viewing half-space.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::camera::Aabb;
use crate::error::{Error, Result};
use crate::render::VolumeField;
use crate::sh::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    IsotropicBlob,
    ThinShell,
    AnisotropicSlats,
}

impl SceneKind {
    pub const ALL: [SceneKind; 3] = [
        SceneKind::IsotropicBlob,
        SceneKind::ThinShell,
        SceneKind::AnisotropicSlats,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SceneKind::IsotropicBlob => "isotropic_blob",
            SceneKind::ThinShell => "thin_shell",
            SceneKind::AnisotropicSlats => "anisotropic_slats",
        }
    }
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SceneKind::ALL
            .into_iter()
            .find(|k| k.name() == s.replace('-', "_"))
            .ok_or_else(|| Error::Input(format!("unknown scene kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobParams {
    /// Peak density at the origin.
    pub amplitude: f64,
    /// Gaussian standard deviation.
    pub scale: f64,
}

impl Default for BlobParams {
    fn default() -> Self {
        Self {
            amplitude: 20.0,
            scale: 0.35,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellParams {
    pub radius: f64,
    /// Half-width of the compactly supported radial profile.
    pub width: f64,
    pub amplitude: f64,
}

impl Default for ShellParams {
    fn default() -> Self {
        Self {
            radius: 0.6,
            width: 0.12,
            amplitude: 30.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlatParams {
    pub count: usize,
    /// Vertical distance between neighbouring strip centers.
    pub spacing: f64,
    /// Strip tilt from the horizontal, in degrees.
    pub tilt_degrees: f64,
    /// Half-length of a strip across its tilted direction.
    pub half_length: f64,
    /// Half-extent of every strip along `x`.
    pub half_span: f64,
    /// Standard deviation of the Gaussian thickness profile.
    pub thickness: f64,
    /// Peak density on a strip's mid-plane.
    pub density: f64,
}

impl Default for SlatParams {
    fn default() -> Self {
        Self {
            count: 5,
            spacing: 0.25,
            tilt_degrees: 45.0,
            half_length: 0.22,
            half_span: 0.7,
            thickness: 0.025,
            density: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SceneParams {
    IsotropicBlob(BlobParams),
    ThinShell(ShellParams),
    AnisotropicSlats(SlatParams),
}

impl SceneParams {
    pub fn default_for(kind: SceneKind) -> Self {
        match kind {
            SceneKind::IsotropicBlob => SceneParams::IsotropicBlob(BlobParams::default()),
            SceneKind::ThinShell => SceneParams::ThinShell(ShellParams::default()),
            SceneKind::AnisotropicSlats => SceneParams::AnisotropicSlats(SlatParams::default()),
        }
    }

    pub fn kind(&self) -> SceneKind {
        match self {
            SceneParams::IsotropicBlob(_) => SceneKind::IsotropicBlob,
            SceneParams::ThinShell(_) => SceneKind::ThinShell,
            SceneParams::AnisotropicSlats(_) => SceneKind::AnisotropicSlats,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticScene {
    pub name: String,
    pub params: SceneParams,
    /// Box containing all density.
    pub bbox: Aabb,
}

pub fn make_scene(params: SceneParams) -> Result<AnalyticScene> {
    let positive = |v: f64, what: &str| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::Input(format!("{what} must be positive, got {v}")))
        }
    };
    let bbox = match params {
        SceneParams::IsotropicBlob(p) => {
            positive(p.amplitude, "blob amplitude")?;
            positive(p.scale, "blob scale")?;
            Aabb::cube(1.0)
        }
        SceneParams::ThinShell(p) => {
            positive(p.radius, "shell radius")?;
            positive(p.width, "shell width")?;
            positive(p.amplitude, "shell amplitude")?;
            if p.width >= p.radius {
                return Err(Error::Input("shell width must be below its radius".into()));
            }
            Aabb::cube(p.radius + p.width)
        }
        SceneParams::AnisotropicSlats(p) => {
            if p.count == 0 {
                return Err(Error::Input("slat count must be positive".into()));
            }
            positive(p.spacing, "slat spacing")?;
            positive(p.half_length, "slat half-length")?;
            positive(p.half_span, "slat half-span")?;
            positive(p.thickness, "slat thickness")?;
            positive(p.density, "slat density")?;
            if !(0.0..90.0).contains(&p.tilt_degrees) {
                return Err(Error::Input("slat tilt must lie in [0, 90) degrees".into()));
            }
            let slats = Slats::new(&p);
            let pad = 4.0 * p.thickness;
            let (cy, cz) = (slats.u[0], slats.u[1]);
            let reach_y = p.half_length * cy.abs() + pad;
            let reach_z = p.half_length * cz.abs() + pad + slats.top;
            Aabb {
                min: [-(p.half_span + pad), -reach_y, -reach_z],
                max: [p.half_span + pad, reach_y, reach_z],
            }
        }
    };
    Ok(AnalyticScene {
        name: params.kind().name().to_string(),
        params,
        bbox,
    })
}

/// Derived slat geometry in the `(y, z)` plane.
struct Slats {
    /// Unit direction along a strip.
    u: [f64; 2],
    /// Unit normal, pointing up.
    n: [f64; 2],
    /// `z` of the topmost strip center.
    top: f64,
}

impl Slats {
    fn new(p: &SlatParams) -> Self {
        let beta = p.tilt_degrees.to_radians();
        Self {
            u: [beta.cos(), beta.sin()],
            n: [-beta.sin(), beta.cos()],
            top: 0.5 * (p.count as f64 - 1.0) * p.spacing,
        }
    }

    fn center_z(&self, p: &SlatParams, i: usize) -> f64 {
        i as f64 * p.spacing - self.top
    }
}

/// 1 inside `|s| <= edge - ramp`, 0 beyond `edge`, quintic smoothstep between.
fn window(s: f64, edge: f64, ramp: f64) -> f64 {
    let t = ((edge - s.abs()) / ramp).clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

fn smooth_bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let q = 1.0 - s * s;
        q * q * q
    }
}

impl AnalyticScene {
    pub fn kind(&self) -> SceneKind {
        self.params.kind()
    }

    /// Per-strip data for a point: density and the index of the nearest strip.
    fn slat_density(&self, p: &SlatParams, x: [f64; 3]) -> (f64, usize) {
        let g = Slats::new(p);
        let across = window(x[0], p.half_span, 0.1);
        if across == 0.0 {
            return (0.0, 0);
        }
        let mut total = 0.0;
        let mut best = (0.0, 0usize);
        for i in 0..p.count {
            let dz = x[2] - g.center_z(p, i);
            let along = x[1] * g.u[0] + dz * g.u[1];
            let normal = x[1] * g.n[0] + dz * g.n[1];
            if normal.abs() > 6.0 * p.thickness {
                continue;
            }
            let w = window(along, p.half_length, 0.05);
            let v = w * (-0.5 * (normal / p.thickness).powi(2)).exp();
            total += v;
            if v > best.0 {
                best = (v, i);
            }
        }
        (p.density * across * total, best.1)
    }
}

impl VolumeField for AnalyticScene {
    fn density(&self, x: [f64; 3], _d: Direction) -> f64 {
        match self.params {
            SceneParams::IsotropicBlob(p) => {
                let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                p.amplitude * (-r2 / (2.0 * p.scale * p.scale)).exp()
            }
            SceneParams::ThinShell(p) => {
                let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                p.amplitude * smooth_bump((r - p.radius) / p.width)
            }
            SceneParams::AnisotropicSlats(p) => self.slat_density(&p, x).0,
        }
    }

    fn color(&self, x: [f64; 3], d: Direction) -> [f64; 3] {
        match self.params {
            SceneParams::IsotropicBlob(_) => [
                0.5 + 0.4 * (3.0 * x[0]).sin(),
                0.5 + 0.4 * (3.0 * x[1] + 1.0).sin(),
                0.5 + 0.4 * (3.0 * x[2]).cos(),
            ],
            SceneParams::ThinShell(_) => {
                let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt().max(1e-9);
                let lat = x[2] / r;
                [
                    0.5 + 0.45 * (4.0 * lat).sin(),
                    0.35 + 0.3 * (x[0] / r),
                    0.6 - 0.3 * lat * lat,
                ]
            }
            SceneParams::AnisotropicSlats(p) => {
                let g = Slats::new(&p);
                let (_, i) = self.slat_density(&p, x);
                let level = if p.count > 1 {
                    i as f64 / (p.count - 1) as f64
                } else {
                    0.5
                };
                let stripe = 0.5 + 0.5 * (5.0 * x[0]).sin();
                let top = [0.9, 0.25 + 0.5 * level, 0.15 + 0.2 * stripe];
                let bottom = [0.1 + 0.2 * stripe, 0.3 + 0.4 * level, 0.9];
                // Viewer above the strip (looking against its normal) sees the top face.
                let facing = -(d.y() * g.n[0] + d.z() * g.n[1]);
                let s = 1.0 / (1.0 + (-8.0 * facing).exp());
                [0, 1, 2].map(|c| s * top[c] + (1.0 - s) * bottom[c])
            }
        }
    }
}
