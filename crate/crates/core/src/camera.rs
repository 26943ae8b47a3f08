//! Pinhole cameras and ray generation.
//!
//! Camera space looks down `-z` with `+y` up, matching the NeRF-synthetic
//! releases. Poses are camera-to-world 4x4 matrices stored row-major.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sh::Direction;

/// Tolerance for `R^T R = I` and the homogeneous bottom row.
pub const RIGID_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: [f64; 3],
    pub direction: Direction,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    pub fn new(origin: [f64; 3], direction: Direction, t_near: f64, t_far: f64) -> Result<Self> {
        if !(t_near >= 0.0 && t_near < t_far && t_far.is_finite()) {
            return Err(Error::Input(format!(
                "ray bounds must satisfy 0 <= near < far, got [{t_near}, {t_far}]"
            )));
        }
        if origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("ray origin is not finite".into()));
        }
        Ok(Self {
            origin,
            direction,
            t_near,
            t_far,
        })
    }

    pub fn at(&self, t: f64) -> [f64; 3] {
        let d = self.direction.to_array();
        [
            self.origin[0] + t * d[0],
            self.origin[1] + t * d[1],
            self.origin[2] + t * d[2],
        ]
    }

    /// Restricts `[t_near, t_far]` to the segment inside an axis-aligned box.
    /// Returns `None` when the ray misses the box within its bounds.
    pub fn clip_to_box(&self, bbox: &Aabb) -> Option<Ray> {
        let d = self.direction.to_array();
        let (mut lo, mut hi) = (self.t_near, self.t_far);
        for a in 0..3 {
            if d[a].abs() < 1e-15 {
                if self.origin[a] < bbox.min[a] || self.origin[a] > bbox.max[a] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d[a];
            let mut t0 = (bbox.min[a] - self.origin[a]) * inv;
            let mut t1 = (bbox.max[a] - self.origin[a]) * inv;
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            lo = lo.max(t0);
            hi = hi.min(t1);
        }
        (lo < hi).then_some(Ray {
            t_near: lo,
            t_far: hi,
            ..*self
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn cube(half_extent: f64) -> Self {
        Self {
            min: [-half_extent; 3],
            max: [half_extent; 3],
        }
    }

    pub fn center(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| 0.5 * (self.min[a] + self.max[a]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    /// Camera-to-world, row-major.
    pub pose: [[f64; 4]; 4],
}

impl Camera {
    pub fn new(width: usize, height: usize, focal: f64, pose: [[f64; 4]; 4]) -> Result<Self> {
        let cam = Self {
            width,
            height,
            focal,
            pose,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Input("camera resolution must be positive".into()));
        }
        if !(self.focal > 0.0 && self.focal.is_finite()) {
            return Err(Error::Input(format!("focal length {} is not positive", self.focal)));
        }
        check_rigid(&self.pose, RIGID_TOLERANCE)
    }

    pub fn origin(&self) -> [f64; 3] {
        [self.pose[0][3], self.pose[1][3], self.pose[2][3]]
    }

    /// Focal length from the horizontal field of view.
    pub fn focal_from_fov(width: usize, camera_angle_x: f64) -> f64 {
        0.5 * width as f64 / (0.5 * camera_angle_x).tan()
    }

    /// Ray through the center of pixel `(px, py)`; `py` counts rows from the top.
    pub fn ray(&self, px: usize, py: usize, t_near: f64, t_far: f64) -> Result<Ray> {
        let cx = (px as f64 + 0.5 - 0.5 * self.width as f64) / self.focal;
        let cy = -(py as f64 + 0.5 - 0.5 * self.height as f64) / self.focal;
        let local = [cx, cy, -1.0];
        let r = &self.pose;
        let world = [0, 1, 2].map(|i| r[i][0] * local[0] + r[i][1] * local[1] + r[i][2] * local[2]);
        Ray::new(self.origin(), Direction::from_array(world)?, t_near, t_far)
    }

    /// One ray per listed pixel.
    pub fn generate_rays(&self, pixels: &[(usize, usize)], t_near: f64, t_far: f64) -> Result<Vec<Ray>> {
        self.validate()?;
        pixels
            .iter()
            .map(|&(px, py)| {
                if px >= self.width || py >= self.height {
                    return Err(Error::Input(format!(
                        "pixel ({px}, {py}) outside {}x{} image",
                        self.width, self.height
                    )));
                }
                self.ray(px, py, t_near, t_far)
            })
            .collect()
    }

    /// Rays for every pixel in row-major order.
    pub fn all_rays(&self, t_near: f64, t_far: f64) -> Result<Vec<Ray>> {
        self.validate()?;
        let mut rays = Vec::with_capacity(self.width * self.height);
        for py in 0..self.height {
            for px in 0..self.width {
                rays.push(self.ray(px, py, t_near, t_far)?);
            }
        }
        Ok(rays)
    }

    /// Camera at `eye` looking at `target` with world `+z` as the up hint.
    pub fn look_at(width: usize, height: usize, focal: f64, eye: [f64; 3], target: [f64; 3]) -> Result<Self> {
        let back = normalize(sub(eye, target))?;
        let up_hint = if back[2].abs() > 0.999 { [0.0, 1.0, 0.0] } else { [0.0, 0.0, 1.0] };
        let right = normalize(cross(up_hint, back))?;
        let up = cross(back, right);
        let pose = [
            [right[0], up[0], back[0], eye[0]],
            [right[1], up[1], back[1], eye[1]],
            [right[2], up[2], back[2], eye[2]],
            [0.0, 0.0, 0.0, 1.0],
        ];
        Camera::new(width, height, focal, pose)
    }
}

/// Checks that the upper-left 3x3 block is a rotation and the bottom row is
/// `[0, 0, 0, 1]`.
pub fn check_rigid(pose: &[[f64; 4]; 4], tol: f64) -> Result<()> {
    if pose.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Input("pose contains non-finite entries".into()));
    }
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| pose[k][i] * pose[k][j]).sum();
            let expected = if i == j { 1.0 } else { 0.0 };
            if (dot - expected).abs() > tol {
                return Err(Error::Input(format!(
                    "pose rotation is not orthonormal (R^T R [{i}][{j}] = {dot})"
                )));
            }
        }
    }
    let det = pose[0][0] * (pose[1][1] * pose[2][2] - pose[1][2] * pose[2][1])
        - pose[0][1] * (pose[1][0] * pose[2][2] - pose[1][2] * pose[2][0])
        + pose[0][2] * (pose[1][0] * pose[2][1] - pose[1][1] * pose[2][0]);
    if (det - 1.0).abs() > tol {
        return Err(Error::Input(format!("pose rotation has determinant {det}")));
    }
    let bottom = pose[3];
    if bottom[0].abs() > tol || bottom[1].abs() > tol || bottom[2].abs() > tol || (bottom[3] - 1.0).abs() > tol {
        return Err(Error::Input("pose bottom row must be [0, 0, 0, 1]".into()));
    }
    Ok(())
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(v: [f64; 3]) -> Result<[f64; 3]> {
    Ok(Direction::from_array(v)?.to_array())
}

pub const IDENTITY_POSE: [[f64; 4]; 4] = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_center_pixel_looks_down_negative_z() {
        let cam = Camera::new(5, 5, 10.0, IDENTITY_POSE).unwrap();
        let r = cam.ray(2, 2, 0.0, 1.0).unwrap();
        let d = r.direction.to_array();
        assert!(d[0].abs() < 1e-15 && d[1].abs() < 1e-15);
        assert!((d[2] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn translation_sets_every_origin() {
        let mut pose = IDENTITY_POSE;
        pose[0][3] = 1.5;
        pose[1][3] = -2.0;
        pose[2][3] = 4.0;
        let cam = Camera::new(4, 3, 3.0, pose).unwrap();
        for r in cam.all_rays(0.1, 5.0).unwrap() {
            assert_eq!(r.origin, [1.5, -2.0, 4.0]);
        }
    }

    #[test]
    fn corner_pixel_matches_pinhole_geometry() {
        let (w, h, f) = (8usize, 6usize, 7.0);
        let cam = Camera::new(w, h, f, IDENTITY_POSE).unwrap();
        let r = cam.ray(0, 0, 0.0, 1.0).unwrap();
        // Top-left pixel center sits half a pixel in from the corner.
        let u = (0.5 - w as f64 / 2.0) / f;
        let v = -(0.5 - h as f64 / 2.0) / f;
        let n = (u * u + v * v + 1.0).sqrt();
        let d = r.direction.to_array();
        assert!((d[0] - u / n).abs() < 1e-15);
        assert!((d[1] - v / n).abs() < 1e-15);
        assert!((d[2] + 1.0 / n).abs() < 1e-15);
    }

    #[test]
    fn non_rigid_pose_is_rejected() {
        let mut pose = IDENTITY_POSE;
        pose[0][0] = 2.0;
        assert!(matches!(Camera::new(2, 2, 1.0, pose), Err(Error::Input(_))));
        let mut singular = IDENTITY_POSE;
        singular[2][2] = 0.0;
        assert!(Camera::new(2, 2, 1.0, singular).is_err());
        let mut reflect = IDENTITY_POSE;
        reflect[0][0] = -1.0;
        assert!(Camera::new(2, 2, 1.0, reflect).is_err());
    }

    #[test]
    fn non_positive_focal_is_rejected() {
        assert!(Camera::new(2, 2, 0.0, IDENTITY_POSE).is_err());
    }

    #[test]
    fn look_at_points_the_center_ray_at_the_target() {
        let cam = Camera::look_at(9, 9, 12.0, [3.0, -1.0, 2.0], [0.0, 0.0, 0.0]).unwrap();
        let r = cam.ray(4, 4, 0.0, 10.0).unwrap();
        let expected = Direction::new(-3.0, 1.0, -2.0).unwrap();
        for (a, b) in r.direction.to_array().iter().zip(expected.to_array()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ray_bounds_are_validated() {
        let d = Direction::new(0.0, 0.0, 1.0).unwrap();
        assert!(Ray::new([0.0; 3], d, 1.0, 1.0).is_err());
        assert!(Ray::new([0.0; 3], d, -0.5, 1.0).is_err());
    }

    #[test]
    fn box_clipping() {
        let d = Direction::new(0.0, 0.0, -1.0).unwrap();
        let r = Ray::new([0.0, 0.0, 4.0], d, 0.0, 10.0).unwrap();
        let c = r.clip_to_box(&Aabb::cube(1.0)).unwrap();
        assert!((c.t_near - 3.0).abs() < 1e-12 && (c.t_far - 5.0).abs() < 1e-12);
        let miss = Ray::new([3.0, 0.0, 4.0], d, 0.0, 10.0).unwrap();
        assert!(miss.clip_to_box(&Aabb::cube(1.0)).is_none());
    }
}
