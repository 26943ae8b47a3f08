use ndarray::Array2;
use proptest::prelude::*;

use anisonerf::field::{compose_density, compose_latent, FieldConfig, FieldInputs, RadianceField};
use anisonerf::gradcheck::{gradient_check, RenderLossProblem};
use anisonerf::pipeline::draw_samples;
use anisonerf::render::SamplingMode;
use anisonerf::sh::{eval_sh_basis, num_sh_coeffs, Direction};

mod support;

fn dir(v: [f64; 3]) -> Option<Direction> {
    Direction::from_array(v).ok()
}

fn vec3() -> impl Strategy<Value = [f64; 3]> {
    [-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64]
}

fn small_field(degree: usize, seed: u64) -> RadianceField<f64> {
    let config = FieldConfig {
        latent_width: 5,
        geometry_hidden: vec![32, 32],
        color_hidden: vec![16],
        ..FieldConfig::default()
    }
    .with_degree(degree);
    RadianceField::new(config, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn degree_zero_ignores_direction(
        x in vec3(),
        dirs in prop::collection::vec(vec3(), 2..12),
        seed in 0u64..1000,
    ) {
        let dirs: Vec<Direction> = dirs.into_iter().filter_map(dir).collect();
        prop_assume!(dirs.len() >= 2);
        let field = small_field(0, seed);
        let out = field.query(&vec![x; dirs.len()], &dirs).unwrap();
        for i in 1..dirs.len() {
            prop_assert_eq!(out.sigma[i].to_bits(), out.sigma[0].to_bits());
            prop_assert_eq!(out.latent.row(i), out.latent.row(0));
        }
        prop_assert!(out.sigma_aniso.iter().all(|&v| v == 0.0));
        prop_assert!(out.latent_aniso.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn composition_at_degree_zero_ignores_direction(
        k0 in -5.0..5.0f64,
        w in prop::collection::vec(-3.0..3.0f64, 1..8),
        a in vec3(),
        b in vec3(),
    ) {
        let (Some(a), Some(b)) = (dir(a), dir(b)) else { return Ok(()) };
        let ba = eval_sh_basis(a, 0).unwrap().into_values();
        let bb = eval_sh_basis(b, 0).unwrap().into_values();
        prop_assert_eq!(compose_density(&[k0], &ba).unwrap(), compose_density(&[k0], &bb).unwrap());
        let w = Array2::from_shape_vec((w.len(), 1), w).unwrap();
        prop_assert_eq!(compose_latent(w.view(), &ba).unwrap(), compose_latent(w.view(), &bb).unwrap());
    }

    #[test]
    fn decomposition_identity(
        degree in 0usize..=4,
        coeffs in prop::collection::vec(-3.0..3.0f64, 25 * 4),
        d in vec3(),
    ) {
        let Some(d) = dir(d) else { return Ok(()) };
        let s = num_sh_coeffs(degree);
        let basis = eval_sh_basis(d, degree).unwrap().into_values();
        let k = &coeffs[..s];
        let dens = compose_density(k, &basis).unwrap();
        prop_assert!((dens.sigma_raw - (k[0] * basis[0] + dens.sigma_aniso_raw)).abs() < 1e-12);
        prop_assert!(dens.sigma >= 0.0);

        let w = Array2::from_shape_vec((3, s), coeffs[s..4 * s].to_vec()).unwrap();
        let (e, e_aniso) = compose_latent(w.view(), &basis).unwrap();
        for n in 0..3 {
            prop_assert!((e[n] - (w[[n, 0]] * basis[0] + e_aniso[n])).abs() < 1e-12);
        }
    }

    #[test]
    fn colors_stay_inside_the_unit_interval(
        points in prop::collection::vec((vec3(), vec3()), 1..16),
        degree in 0usize..=3,
        seed in 0u64..100,
    ) {
        let (xs, ds): (Vec<[f64; 3]>, Vec<Option<Direction>>) =
            points.into_iter().map(|(x, d)| (x, dir(d))).unzip();
        prop_assume!(ds.iter().all(Option::is_some));
        let ds: Vec<Direction> = ds.into_iter().flatten().collect();
        let field = small_field(degree, seed);
        let inputs = FieldInputs::from_points(&field.config, &xs, &ds).unwrap();
        let (out, _) = field.forward(&inputs).unwrap();
        prop_assert!(out.rgb.iter().all(|&c| c > 0.0 && c < 1.0));
        prop_assert!(out.sigma.iter().all(|&s| s >= 0.0));
    }
}

#[test]
fn toy_network_gradients_match_finite_differences() {
    use rand::{Rng, SeedableRng};
    let data = support::tiny_dataset(anisonerf::scene::SceneKind::ThinShell, 2, 8, 1);
    let (rays, targets) = anisonerf::pipeline::dataset_rays::<f64>(&data).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let pick: Vec<usize> = (0..16).map(|_| rng.gen_range(0..rays.len())).collect();
    let rays: Vec<_> = pick.iter().map(|&i| rays[i]).collect();
    let targets: Vec<_> = pick.iter().map(|&i| targets[i]).collect();
    let samples = draw_samples(&rays, 8, SamplingMode::Stratified, &mut rng);
    let config = FieldConfig {
        latent_width: 3,
        geometry_hidden: vec![12, 12],
        color_hidden: vec![8, 8],
        ..FieldConfig::default()
    };
    let field = RadianceField::<f64>::new(config, 2).unwrap();
    let mut problem = RenderLossProblem::new(field, rays, samples, targets, data.background, 1e-2);
    let report = gradient_check(&mut problem, 100, 1e-6, 0).unwrap();
    assert_eq!(report.entries.len(), 100);
    assert!(report.max_rel_error < 1e-4, "{}", report.max_rel_error);
}
