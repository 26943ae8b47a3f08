use anisonerf::camera::check_rigid;
use anisonerf::dataset::{load_transforms_json, render_reference_dataset, write_transforms_json, LoadOptions, RigConfig, Split};
use anisonerf::image_io::{read_png, srgb_byte_to_linear, write_png, Image};
use anisonerf::scene::{make_scene, SceneKind, SceneParams};
use proptest::prelude::*;

/// The reference renders at `fine_n` and `2 fine_n` agree, so `fine_n` is
/// fine enough to serve as ground truth.
#[test]
fn oracle_is_self_consistent_at_the_dataset_resolution() {
    for kind in SceneKind::ALL {
        let scene = make_scene(SceneParams::default_for(kind)).unwrap();
        let rig = RigConfig::default();
        let a = render_reference_dataset(&scene, 3, 24, 4096, 0, &rig, Split::Train).unwrap();
        let b = render_reference_dataset(&scene, 3, 24, 8192, 0, &rig, Split::Train).unwrap();
        let worst = a
            .views
            .iter()
            .zip(&b.views)
            .flat_map(|(va, vb)| va.image.pixels.iter().zip(&vb.image.pixels))
            .flat_map(|(pa, pb)| (0..3).map(move |c| (pa[c] - pb[c]).abs()))
            .fold(0.0f32, f32::max);
        assert!(worst < 1e-3, "{kind:?}: {worst}");
    }
}

#[test]
fn dataset_survives_a_file_round_trip() {
    let scene = make_scene(SceneParams::default_for(SceneKind::AnisotropicSlats)).unwrap();
    let data = render_reference_dataset(&scene, 4, 16, 512, 3, &RigConfig::default(), Split::Test).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = write_transforms_json(dir.path(), &data).unwrap();
    assert!(path.ends_with("transforms_test.json"));
    let back = load_transforms_json(
        &path,
        &LoadOptions {
            split: Split::Test,
            ..LoadOptions::default()
        },
    )
    .unwrap();

    assert_eq!(back.len(), data.len());
    assert_eq!(back.split, Split::Test);
    assert!((back.near - data.near).abs() < 1e-9 && (back.far - data.far).abs() < 1e-9);
    assert_eq!(back.bbox, data.bbox);
    for (a, b) in data.views.iter().zip(&back.views) {
        assert_eq!((a.camera.width, a.camera.height), (b.camera.width, b.camera.height));
        assert!((a.camera.focal - b.camera.focal).abs() < 1e-9);
        for r in 0..4 {
            for c in 0..4 {
                assert!((a.camera.pose[r][c] - b.camera.pose[r][c]).abs() < 1e-9);
            }
        }
        // Pixels agree exactly once quantized to 8 bits.
        assert_eq!(a.image.quantized(), b.image.quantized());
    }
}

#[test]
fn generated_cameras_are_rigid() {
    let scene = make_scene(SceneParams::default_for(SceneKind::ThinShell)).unwrap();
    let data = render_reference_dataset(&scene, 30, 2, 8, 11, &RigConfig::default(), Split::Train).unwrap();
    for v in &data.views {
        check_rigid(&v.camera.pose, 1e-9).unwrap();
    }
}

#[test]
fn unknown_scene_parameters_are_rejected() {
    let mut params = SceneParams::default_for(SceneKind::IsotropicBlob);
    if let SceneParams::IsotropicBlob(p) = &mut params {
        p.scale = -1.0;
    }
    assert!(make_scene(params).is_err());
    assert!(serde_json::from_str::<SceneParams>(r#"{"kind": "teapot"}"#).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn png_round_trip_is_exact_at_8_bits(
        w in 1usize..9,
        h in 1usize..9,
        bytes in prop::collection::vec(any::<[u8; 3]>(), 64),
    ) {
        let pixels: Vec<[f32; 3]> = (0..w * h).map(|i| bytes[i % 64].map(|b| srgb_byte_to_linear(b) as f32)).collect();
        let img = Image::from_pixels(w, h, pixels).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        write_png(&path, &img).unwrap();
        let back = read_png(&path, [1.0; 3]).unwrap();
        prop_assert_eq!(back.quantized(), img.quantized());
    }
}
