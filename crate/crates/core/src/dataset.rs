//! Posed image collections: reference rendering of analytic scenes and the
//! NeRF-synthetic `transforms.json` format.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::camera::{check_rigid, Aabb, Camera, Ray};
use crate::error::{Error, Result};
use crate::image_io::{read_png, write_png, Image};
use crate::render::integrate_ray_oracle;
use crate::scene::{AnalyticScene, SceneParams};

/// Default white background of synthetic data.
pub const WHITE: [f64; 3] = [1.0; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub camera: Camera,
    pub image: Image,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub views: Vec<View>,
    pub split: Split,
    pub near: f64,
    pub far: f64,
    pub background: [f64; 3],
    /// When set, rays are clipped to this box and see only background outside it.
    pub bbox: Option<Aabb>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.views.iter().enumerate() {
            v.camera
                .validate()
                .map_err(|e| Error::Input(format!("view {i}: {e}")))?;
            if v.image.width != v.camera.width || v.image.height != v.camera.height {
                return Err(Error::Input(format!(
                    "view {i}: image is {}x{} but camera is {}x{}",
                    v.image.width, v.image.height, v.camera.width, v.camera.height
                )));
            }
        }
        Ok(())
    }

    /// The camera ray for a pixel, clipped to the scene box. `None` means the
    /// pixel sees only background.
    pub fn pixel_ray(&self, camera: &Camera, px: usize, py: usize) -> Result<Option<Ray>> {
        let ray = camera.ray(px, py, self.near, self.far)?;
        Ok(match &self.bbox {
            Some(b) => ray.clip_to_box(b),
            None => Some(ray),
        })
    }

    /// Rays for every pixel of a camera, row-major.
    pub fn camera_rays(&self, camera: &Camera) -> Result<Vec<Option<Ray>>> {
        let mut rays = Vec::with_capacity(camera.width * camera.height);
        for py in 0..camera.height {
            for px in 0..camera.width {
                rays.push(self.pixel_ray(camera, px, py)?);
            }
        }
        Ok(rays)
    }
}

/// Camera placement for reference renders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigConfig {
    pub radius: f64,
    /// Horizontal field of view in radians.
    pub camera_angle_x: f64,
    pub background: [f64; 3],
}

impl Default for RigConfig {
    fn default() -> Self {
        Self {
            radius: 3.0,
            camera_angle_x: 0.69,
            background: WHITE,
        }
    }
}

/// Camera centers spread over a sphere: a Fibonacci lattice whose azimuth is
/// offset by a seeded random angle.
pub fn sphere_cameras(n_views: usize, radius: f64, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n_views)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n_views as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = offset + golden * i as f64;
            [radius * r * phi.cos(), radius * r * phi.sin(), radius * z]
        })
        .collect()
}

/// Renders every pixel of `n_views` cameras around the scene with the
/// quadrature oracle.
pub fn render_reference_dataset(
    scene: &AnalyticScene,
    n_views: usize,
    resolution: usize,
    fine_n: usize,
    seed: u64,
    rig: &RigConfig,
    split: Split,
) -> Result<Dataset> {
    if n_views < 2 {
        return Err(Error::Input("a reference dataset needs at least two views".into()));
    }
    let focal = Camera::focal_from_fov(resolution, rig.camera_angle_x);
    let center = scene.bbox.center();
    let half_diag = {
        let e = [0, 1, 2].map(|a| 0.5 * (scene.bbox.max[a] - scene.bbox.min[a]));
        (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt()
    };
    let near = (rig.radius - half_diag).max(0.0);
    let far = rig.radius + half_diag;

    let mut dataset = Dataset {
        views: Vec::with_capacity(n_views),
        split,
        near,
        far,
        background: rig.background,
        bbox: Some(scene.bbox),
    };
    for eye in sphere_cameras(n_views, rig.radius, seed) {
        let eye = [eye[0] + center[0], eye[1] + center[1], eye[2] + center[2]];
        let camera = Camera::look_at(resolution, resolution, focal, eye, center)?;
        let image = render_oracle_image(scene, &dataset, &camera, fine_n)?;
        dataset.views.push(View { camera, image });
    }
    Ok(dataset)
}

/// Oracle-renders one camera of a dataset; pixels run in parallel.
pub fn render_oracle_image(scene: &AnalyticScene, dataset: &Dataset, camera: &Camera, fine_n: usize) -> Result<Image> {
    let rays = dataset.camera_rays(camera)?;
    let bg = dataset.background;
    let pixels = rays
        .par_iter()
        .map(|r| {
            let c = match r {
                Some(r) => integrate_ray_oracle(scene, r, fine_n, bg),
                None => bg,
            };
            c.map(|v| v as f32)
        })
        .collect();
    Image::from_pixels(camera.width, camera.height, pixels)
}

/// Reproducibility record written next to generated scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub scene: SceneParams,
    pub seed: u64,
    pub fine_n: usize,
    pub resolution: usize,
    pub train_views: usize,
    pub test_views: usize,
    pub rig: RigConfig,
    pub near: f64,
    pub far: f64,
    pub bbox: Aabb,
}

fn parse_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Options for reading a `transforms_*.json` file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    pub background: [f64; 3],
    /// Used when the file carries no `near` / `far` keys.
    pub near: f64,
    pub far: f64,
    pub split: Split,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            background: WHITE,
            near: 2.0,
            far: 6.0,
            split: Split::Train,
        }
    }
}

/// Reads a NeRF-synthetic camera file. Besides the standard keys, optional
/// `near`, `far` and `aabb` keys written by [`write_transforms_json`] are
/// honored.
pub fn load_transforms_json(path: &Path, opts: &LoadOptions) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string()))?;
    let angle = doc
        .get("camera_angle_x")
        .and_then(Value::as_f64)
        .ok_or_else(|| parse_err(path, "missing numeric `camera_angle_x`"))?;
    let frames = doc
        .get("frames")
        .and_then(Value::as_array)
        .ok_or_else(|| parse_err(path, "missing `frames` array"))?;
    let near = doc.get("near").and_then(Value::as_f64).unwrap_or(opts.near);
    let far = doc.get("far").and_then(Value::as_f64).unwrap_or(opts.far);
    let bbox = match doc.get("aabb") {
        Some(v) => Some(serde_json::from_value::<Aabb>(v.clone()).map_err(|e| parse_err(path, e.to_string()))?),
        None => None,
    };
    if frames.is_empty() {
        log::warn!("{}: no frames, returning an empty dataset", path.display());
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));

    let mut views = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        let frame_err = |reason: String| parse_err(path, format!("frame {i}: {reason}"));
        let file = frame
            .get("file_path")
            .and_then(Value::as_str)
            .ok_or_else(|| frame_err("missing `file_path`".into()))?;
        let pose = parse_matrix(frame.get("transform_matrix")).map_err(frame_err)?;
        check_rigid(&pose, crate::camera::RIGID_TOLERANCE).map_err(|e| frame_err(e.to_string()))?;
        let image_path = resolve_image_path(base, file);
        let image = read_png(&image_path, opts.background).map_err(|e| frame_err(e.to_string()))?;
        let focal = Camera::focal_from_fov(image.width, angle);
        let camera = Camera::new(image.width, image.height, focal, pose).map_err(|e| frame_err(e.to_string()))?;
        views.push(View { camera, image });
    }
    Ok(Dataset {
        views,
        split: opts.split,
        near,
        far,
        background: opts.background,
        bbox,
    })
}

fn parse_matrix(v: Option<&Value>) -> std::result::Result<[[f64; 4]; 4], String> {
    let rows = v
        .and_then(Value::as_array)
        .ok_or("missing `transform_matrix`")?;
    if rows.len() != 4 {
        return Err(format!("`transform_matrix` has {} rows, expected 4", rows.len()));
    }
    let mut m = [[0.0; 4]; 4];
    for (r, row) in rows.iter().enumerate() {
        let row = row.as_array().ok_or("`transform_matrix` row is not an array")?;
        if row.len() != 4 {
            return Err(format!("`transform_matrix` row {r} has {} entries, expected 4", row.len()));
        }
        for (c, x) in row.iter().enumerate() {
            m[r][c] = x.as_f64().ok_or("non-numeric matrix entry")?;
        }
    }
    Ok(m)
}

/// Blender releases omit the `.png` extension from `file_path`.
fn resolve_image_path(base: &Path, file: &str) -> PathBuf {
    let p = base.join(file);
    if p.extension().is_some() {
        p
    } else {
        p.with_extension("png")
    }
}

/// Writes `transforms_<split>.json` plus one PNG per view under `dir/<split>/`.
/// All views must share the same width and focal length.
pub fn write_transforms_json(dir: &Path, dataset: &Dataset) -> Result<PathBuf> {
    let split = dataset.split.name();
    let angle = match dataset.views.first() {
        Some(v) => 2.0 * (0.5 * v.camera.width as f64 / v.camera.focal).atan(),
        None => 0.0,
    };
    let mut frames = Vec::with_capacity(dataset.views.len());
    for (i, v) in dataset.views.iter().enumerate() {
        let rel = format!("./{split}/r_{i}");
        write_png(&dir.join(format!("{split}/r_{i}.png")), &v.image)?;
        frames.push(json!({
            "file_path": rel,
            "transform_matrix": v.camera.pose,
        }));
    }
    let mut doc = json!({
        "camera_angle_x": angle,
        "frames": frames,
        "near": dataset.near,
        "far": dataset.far,
    });
    if let Some(b) = &dataset.bbox {
        doc["aabb"] = serde_json::to_value(b)?;
    }
    let path = dir.join(format!("transforms_{split}.json"));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    std::fs::write(&path, serde_json::to_string_pretty(&doc)?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::IDENTITY_POSE;
    use crate::scene::{make_scene, BlobParams, SceneKind};

    #[test]
    fn focal_from_blender_angle() {
        let f = Camera::focal_from_fov(800, 0.691_111_2);
        assert!((f - 1111.111).abs() < 1e-2, "{f}");
    }

    #[test]
    fn sphere_cameras_are_on_the_sphere_and_seeded() {
        let a = sphere_cameras(30, 2.5, 4);
        let b = sphere_cameras(30, 2.5, 4);
        let c = sphere_cameras(30, 2.5, 5);
        assert_eq!(a, b);
        assert_ne!(a, c);
        for p in a {
            assert!(((p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn generated_poses_are_rigid() {
        let scene = make_scene(SceneParams::default_for(SceneKind::IsotropicBlob)).unwrap();
        let ds = render_reference_dataset(&scene, 12, 2, 64, 1, &RigConfig::default(), Split::Train).unwrap();
        for v in &ds.views {
            check_rigid(&v.camera.pose, 1e-9).unwrap();
        }
    }

    #[test]
    fn too_few_views_is_an_error() {
        let scene = make_scene(SceneParams::default_for(SceneKind::IsotropicBlob)).unwrap();
        assert!(render_reference_dataset(&scene, 1, 4, 64, 0, &RigConfig::default(), Split::Train).is_err());
    }

    #[test]
    fn single_pixel_view_is_one_oracle_ray() {
        let scene = make_scene(SceneParams::IsotropicBlob(BlobParams {
            amplitude: 5.0,
            scale: 0.4,
        }))
        .unwrap();
        let rig = RigConfig::default();
        let ds = render_reference_dataset(&scene, 2, 1, 2048, 3, &rig, Split::Test).unwrap();
        for v in &ds.views {
            let ray = ds.pixel_ray(&v.camera, 0, 0).unwrap().unwrap();
            let expected = integrate_ray_oracle(&scene, &ray, 2048, rig.background);
            assert_eq!(v.image.get(0, 0), expected.map(|c| c as f32));
        }
    }

    #[test]
    fn minimal_file_with_identity_camera() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("img.png"), &Image::new(2, 2, [0.2; 3])).unwrap();
        let doc = json!({
            "camera_angle_x": 0.5,
            "frames": [{"file_path": "./img", "transform_matrix": IDENTITY_POSE}],
        });
        let path = dir.path().join("transforms.json");
        std::fs::write(&path, doc.to_string()).unwrap();
        let ds = load_transforms_json(&path, &LoadOptions::default()).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.views[0].camera.origin(), [0.0; 3]);
        assert_eq!(ds.views[0].camera.pose, IDENTITY_POSE);
        assert_eq!((ds.near, ds.far), (2.0, 6.0));
    }

    #[test]
    fn empty_frames_give_an_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        std::fs::write(&path, r#"{"camera_angle_x": 0.7, "frames": []}"#).unwrap();
        assert!(load_transforms_json(&path, &LoadOptions::default()).unwrap().is_empty());
    }

    #[test]
    fn malformed_files_name_the_frame() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        std::fs::write(&path, r#"{"frames": []}"#).unwrap();
        assert!(matches!(
            load_transforms_json(&path, &LoadOptions::default()),
            Err(Error::Parse { .. })
        ));

        std::fs::write(
            &path,
            r#"{"camera_angle_x": 0.7, "frames": [{"file_path": "a", "transform_matrix": [[1,0,0],[0,1,0],[0,0,1]]}]}"#,
        )
        .unwrap();
        let err = load_transforms_json(&path, &LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("frame 0"), "{err}");

        std::fs::write(
            &path,
            format!(
                r#"{{"camera_angle_x": 0.7, "frames": [{{"file_path": "missing", "transform_matrix": {}}}]}}"#,
                serde_json::to_string(&IDENTITY_POSE).unwrap()
            ),
        )
        .unwrap();
        let err = load_transforms_json(&path, &LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("frame 0"), "{err}");
    }
}
