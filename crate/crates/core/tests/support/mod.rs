//! Shared helpers for the integration tests.
#![allow(dead_code)]

pub mod reference;

use anisonerf::dataset::{render_reference_dataset, Dataset, RigConfig, Split};
use anisonerf::scene::{make_scene, SceneKind, SceneParams};

/// A tiny rendered dataset for quick training runs.
pub fn tiny_dataset(kind: SceneKind, views: usize, resolution: usize, seed: u64) -> Dataset {
    let scene = make_scene(SceneParams::default_for(kind)).unwrap();
    render_reference_dataset(&scene, views, resolution, 256, seed, &RigConfig::default(), Split::Train).unwrap()
}
