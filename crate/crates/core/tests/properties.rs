use proptest::prelude::*;

use plenoptic_bounds::bounds::{
    hcr_bound, hcr_functional, lambda_gaussian, lambda_poisson, mse_bound, DeltaGrid, HcrValue,
    NoiseModel,
};
use plenoptic_bounds::estimator::{run_trials, MleConfig};
use plenoptic_bounds::fisher::{fi_map, pixelwise_fi, GradientImage};
use plenoptic_bounds::forward::{constant_model, Analytic};
use plenoptic_bounds::io::{read_pfm_bytes, write_pfm_bytes};
use plenoptic_bounds::scene::{
    corridor_fixture, parse_scene, scene_to_json, ParameterPoint, ParameterSpace,
};
use plenoptic_bounds::{RadianceImage, Result};

fn image(values: Vec<f64>) -> RadianceImage {
    let n = values.len();
    RadianceImage::new(n, 1, 1, values).unwrap()
}

fn json(scene: &plenoptic_bounds::scene::SceneDescription) -> serde_json::Value {
    serde_json::from_str(&scene_to_json(scene)).unwrap()
}

/// Leaf paths at which two JSON documents differ.
fn diff(a: &serde_json::Value, b: &serde_json::Value, path: String, out: &mut Vec<String>) {
    use serde_json::Value::*;
    match (a, b) {
        (Object(x), Object(y)) => {
            for (k, v) in x {
                diff(v, &y[k], format!("{path}.{k}"), out);
            }
        }
        (Array(x), Array(y)) if x.len() == y.len() => {
            for (i, (v, w)) in x.iter().zip(y).enumerate() {
                diff(v, w, format!("{path}[{i}]"), out);
            }
        }
        _ if a != b => out.push(path),
        _ => {}
    }
}

/// Two-parameter model with pixel i equal to a_i·θ₀ + b_i·θ₁ + c_i.
fn linear_model(
    coeffs: Vec<(f64, f64, f64)>,
) -> Analytic<impl Fn(&[f64]) -> Result<RadianceImage> + Sync> {
    Analytic(move |t: &[f64]| {
        let v = coeffs.iter().map(|(a, b, c)| a * t[0] + b * t[1] + c).collect();
        Ok(image(v))
    })
}

fn plane_point(t0: f64, t1: f64) -> ParameterPoint {
    let space = ParameterSpace::new(vec![0.0, 0.0], vec![4.0, 4.0], vec![0.1, 0.1]).unwrap();
    ParameterPoint::new(vec![t0, t1], space).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binding_is_pure_and_touches_only_its_target(a in -0.4f64..2.8, b in -0.4f64..2.8) {
        let scene = parse_scene(corridor_fixture()).unwrap();
        let space = scene.space().unwrap().clone();
        let pa = ParameterPoint::new(vec![a], space.clone()).unwrap();
        let pb = ParameterPoint::new(vec![b], space).unwrap();
        let sa = scene.apply_parameters(&pa).unwrap();
        prop_assert_eq!(&sa, &scene.apply_parameters(&pa).unwrap());
        let sb = scene.apply_parameters(&pb).unwrap();
        let mut changed = Vec::new();
        diff(&json(&sa), &json(&sb), String::new(), &mut changed);
        let expected: Vec<String> = if (1.0 + a) != (1.0 + b) {
            vec![".surfaces[8].shape.sphere.center[0]".into()]
        } else {
            vec![]
        };
        prop_assert_eq!(changed, expected);
    }

    #[test]
    fn scenes_round_trip(radius in 0.01f64..0.5, albedo in 0.0f64..=1.0, fov in 1.0f64..179.0) {
        let mut scene = parse_scene(corridor_fixture()).unwrap();
        scene.camera.vfov_deg = fov;
        scene.surfaces[0].albedo = [albedo, albedo * 0.5, 1.0 - albedo];
        if let plenoptic_bounds::scene::Shape::Sphere { radius: r, .. } = &mut scene.surfaces[8].shape {
            *r = radius;
        }
        let again = parse_scene(&scene_to_json(&scene)).unwrap();
        prop_assert_eq!(again, scene);
    }

    #[test]
    fn exponents_are_nonnegative(
        pairs in prop::collection::vec((0.01f64..50.0, 0.0f64..50.0), 1..40),
        sigma in 0.01f64..10.0,
    ) {
        let a = image(pairs.iter().map(|p| p.0).collect());
        let b = image(pairs.iter().map(|p| p.1).collect());
        let lp = lambda_poisson(&a, &b).unwrap();
        let lg = lambda_gaussian(&a, &b, sigma).unwrap();
        prop_assert!(lp >= 0.0 && lg >= 0.0);
        prop_assert_eq!(lambda_poisson(&a, &a).unwrap(), 0.0);
        prop_assert_eq!(lambda_gaussian(&a, &a, sigma).unwrap(), 0.0);
        if pairs.iter().any(|(x, y)| x != y) {
            prop_assert!(lp > 0.0 && lg > 0.0);
        }
    }

    #[test]
    fn bound_dominates_every_grid_term(
        steps in prop::collection::vec(0.01f64..1.0, 1..12),
        theta in 1.0f64..10.0,
        noise_sigma in prop::option::of(0.05f64..2.0),
    ) {
        let space = ParameterSpace::new(vec![0.0], vec![20.0], vec![0.01]).unwrap();
        let p = ParameterPoint::new(vec![theta], space).unwrap();
        let deltas: Vec<Vec<f64>> = steps.iter().enumerate()
            .map(|(i, s)| vec![if i % 2 == 0 { *s } else { -*s }])
            .collect();
        let grid = DeltaGrid::new(&p, deltas).unwrap();
        let noise = noise_sigma.map_or(NoiseModel::Poisson, |s| NoiseModel::Awgn { sigma: s });
        let r = hcr_bound(&constant_model(9, 1), &p, &grid, noise, 0, 1).unwrap();
        for t in &r.trace {
            let single = hcr_functional(t.lambda, t.realized[0]).unwrap();
            prop_assert!(r.bound.to_f64() >= single.to_f64());
        }
    }

    #[test]
    fn sum_of_component_bounds_dominates_mse_bound(
        coeffs in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, 10.0f64..15.0), 2..8),
        t0 in 1.0f64..3.0,
        t1 in 1.0f64..3.0,
        s0 in 0.05f64..0.4,
        s1 in 0.05f64..0.4,
        sigma in 0.1f64..3.0,
    ) {
        let model = linear_model(coeffs);
        let p = plane_point(t0, t1);
        let grid = DeltaGrid::lattice(&p, &[s0, s1], &[2, 2]).unwrap();
        let noise = NoiseModel::Awgn { sigma };
        let total = mse_bound(&model, &p, &grid, noise, 1).unwrap().bound.to_f64();
        let parts: f64 = (0..2)
            .map(|j| hcr_bound(&model, &p, &grid, noise, j, 1).unwrap().bound.to_f64())
            .sum();
        prop_assert!(parts >= total * (1.0 - 1e-12), "{parts} < {total}");
    }

    #[test]
    fn awgn_bound_grows_with_sigma(
        coeffs in prop::collection::vec((-2.0f64..2.0, 0.0f64..1.0, 10.0f64..15.0), 1..6),
        sigma in 0.05f64..2.0,
        factor in 1.0f64..5.0,
    ) {
        let model = linear_model(coeffs);
        let p = plane_point(2.0, 2.0);
        let grid = DeltaGrid::axis(&p, 0, 0.1, 5).unwrap();
        let low = hcr_bound(&model, &p, &grid, NoiseModel::Awgn { sigma }, 0, 1).unwrap();
        let high = hcr_bound(&model, &p, &grid, NoiseModel::Awgn { sigma: sigma * factor }, 0, 1).unwrap();
        prop_assert!(high.bound.to_f64() >= low.bound.to_f64());
    }

    #[test]
    fn functional_is_convex_in_lambda(
        l1 in 0.001f64..50.0,
        l2 in 0.001f64..50.0,
        t in 0.0f64..=1.0,
        delta in 0.001f64..10.0,
    ) {
        let f = |l: f64| hcr_functional(l, delta).unwrap().to_f64();
        let mid = f(t * l1 + (1.0 - t) * l2);
        let chord = t * f(l1) + (1.0 - t) * f(l2);
        prop_assert!(mid <= chord * (1.0 + 1e-12) + 1e-300, "{mid} > {chord}");
    }

    #[test]
    fn information_is_nonnegative(
        grads in prop::collection::vec((-10.0f64..10.0, 0.01f64..20.0), 1..30),
        sigma in 0.01f64..5.0,
    ) {
        let n = grads.len();
        let grad = GradientImage {
            width: n,
            height: 1,
            channels: 1,
            data: grads.iter().map(|g| g.0).collect(),
            xi: 0.01,
            component: 0,
            rounds: 1,
        };
        let base = image(grads.iter().map(|g| g.1).collect());
        for noise in [NoiseModel::Poisson, NoiseModel::Awgn { sigma }] {
            let map = pixelwise_fi(&grad, &base, noise).unwrap();
            prop_assert!(map.data.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn pfm_round_trip_is_bit_exact(
        w in 1usize..6,
        h in 1usize..6,
        three in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let c = if three { 3 } else { 1 };
        let mut s = seed;
        let data: Vec<f64> = (0..w * h * c)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let bits = (s >> 33) as u32 & 0x7f7f_ffff; // finite, nonnegative
                f32::from_bits(bits) as f64
            })
            .collect();
        let img = RadianceImage::new(w, h, c, data).unwrap();
        let back = read_pfm_bytes(&write_pfm_bytes(&img).unwrap()).unwrap();
        prop_assert_eq!(
            back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            img.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        prop_assert_eq!(back.shape(), img.shape());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn mse_exceeds_variance_by_squared_bias(seed in any::<u64>(), theta in 0.5f64..1.5) {
        let space = ParameterSpace::new(vec![0.0], vec![2.0], vec![0.01]).unwrap();
        let p = ParameterPoint::new(vec![theta], space).unwrap();
        let model = Analytic(|t: &[f64]| Ok(image(vec![t[0]; 16])));
        let mut cfg = MleConfig::new(vec![theta - 0.3], vec![theta + 0.3]);
        cfg.max_iterations = 60;
        let report = run_trials(&model, &p, NoiseModel::Awgn { sigma: 0.5 }, &cfg, 6, seed, None).unwrap();
        let bias2: f64 = report.bias.iter().map(|b| b * b).sum();
        prop_assert!(report.mse >= report.var - 1e-15);
        prop_assert!((report.mse - report.var - bias2).abs() <= 1e-12 * report.mse.max(1e-12));
    }
}

#[test]
fn constant_model_hcr_reaches_cr_limit() {
    let space = ParameterSpace::new(vec![0.0], vec![20.0], vec![0.01]).unwrap();
    let p = ParameterPoint::new(vec![10.0], space).unwrap();
    let model = constant_model(100, 1);
    let grid = DeltaGrid::axis(&p, 0, 0.01, 20).unwrap();
    let hcr = hcr_bound(&model, &p, &grid, NoiseModel::Poisson, 0, 1).unwrap();
    let cr = plenoptic_bounds::bounds::cr_limit(&model, &p, 0.01, NoiseModel::Poisson, 0, 1).unwrap();
    let (hcr, cr) = (hcr.bound.to_f64(), cr.to_f64());
    assert!(hcr >= cr * (1.0 - 1e-3), "{hcr} vs {cr}");
    let fi = fi_map(&model, &p, 0, 0.01, 1, NoiseModel::Poisson, 1).unwrap();
    let total = plenoptic_bounds::fisher::total_fi(&fi);
    assert!(((1.0 / total) - cr).abs() / cr < 1e-3);
    assert_eq!(hcr_functional(0.0, 1.0).unwrap(), HcrValue::Unbounded);
}
