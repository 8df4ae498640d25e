use std::f64::consts::{FRAC_PI_2, PI};

use ndarray::Array2;
use polarcube::analysis::*;
use polarcube::image::StokesImage;
use polarcube::stokes::{features, StokesVector};
use polarcube::synth::{constant_scene, smooth_scene, SceneSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn labels(environment: Environment, illumination: Illumination, scene_type: SceneType) -> LabelSet {
    LabelSet {
        environment,
        illumination,
        capture_time: "2023-05-01T10:00:00Z".into(),
        scene_type,
    }
}

fn noisy_cube(w: usize, h: usize, c: usize, seed: u64) -> StokesImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    StokesImage::from_fn(w, h, c, |_, _, _| {
        let s0: f64 = rng.random_range(0.2..1.0);
        StokesVector::new(
            s0,
            s0 * rng.random_range(-0.5..0.5),
            s0 * rng.random_range(-0.5..0.5),
            s0 * rng.random_range(-0.3..0.3),
        )
    })
}

fn skewness(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = v.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

#[test]
fn constant_unpolarized_occupies_the_zero_bin() {
    let img = constant_scene(8, 8, 3, StokesVector::new(1.0, 0.0, 0.0, 0.0));
    for f in [Feature::S1, Feature::S2, Feature::S3] {
        let h = stokes_histograms(&[Item::new(&img)], f, DEFAULT_BINS, &LabelFilter::any()).unwrap();
        assert_eq!(h.occupied(), vec![100]);
        assert_eq!(h.total, 192);
        assert!(h.centers()[100].abs() < 1e-12);
    }
}

#[test]
fn symmetric_samples_have_low_skewness() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let img = StokesImage::from_fn(128, 128, 3, |_, _, _| {
        StokesVector::new(1.0, rng.random_range(-0.5..0.5), 0.0, 0.0)
    });
    let h = stokes_histograms(&[Item::new(&img)], Feature::S1, DEFAULT_BINS, &LabelFilter::any()).unwrap();
    // Skewness of the binned distribution, using bin centres.
    let c = h.centers();
    let binned: Vec<f64> = h
        .counts
        .iter()
        .zip(&c)
        .flat_map(|(&n, &x)| std::iter::repeat_n(x, n as usize))
        .collect();
    assert!(skewness(&binned).abs() < 0.05, "{}", skewness(&binned));
}

#[test]
fn masked_pixels_are_not_counted() {
    let mut img = noisy_cube(10, 7, 2, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut valid = 0;
    for y in 0..7 {
        for x in 0..10 {
            for c in 0..2 {
                let keep = rng.random_bool(0.7);
                img.set_valid(x, y, c, keep);
                valid += keep as u64;
            }
        }
    }
    for f in Feature::ALL {
        let h = stokes_histograms(&[Item::new(&img)], f, DEFAULT_BINS, &LabelFilter::any()).unwrap();
        assert_eq!(h.total + h.dropped, valid, "{}", f.name());
        assert_eq!(h.counts.iter().sum::<u64>(), h.total);
    }
    let all_masked = StokesImage::from_fn(2, 2, 1, |_, _, _| StokesVector::UNPOLARIZED);
    let mut m = all_masked.clone();
    m.mask.iter_mut().for_each(|v| *v = false);
    assert!(stokes_histograms(&[Item::new(&m)], Feature::S0, 11, &LabelFilter::any()).is_err());
}

#[test]
fn gradients_match_index_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let plane = Array2::from_shape_fn((9, 13), |_| rng.random_range(-1.0..1.0));
    let g = gradient_field(plane.view()).unwrap();
    assert_eq!(g.gx.dim(), (9, 12));
    assert_eq!(g.gy.dim(), (8, 13));
    for y in 0..9 {
        for x in 0..12 {
            assert_eq!(g.gx[(y, x)].to_bits(), (plane[(y, x + 1)] - plane[(y, x)]).to_bits());
        }
    }
    for y in 0..8 {
        for x in 0..13 {
            assert_eq!(g.gy[(y, x)].to_bits(), (plane[(y + 1, x)] - plane[(y, x)]).to_bits());
        }
    }
    let ramp = Array2::from_shape_fn((4, 6), |(_, x)| 0.25 * x as f64);
    let g = gradient_field(ramp.view()).unwrap();
    assert!(g.gx.iter().all(|&v| v == 0.25) && g.gy.iter().all(|&v| v == 0.0));
    let c = Array2::from_elem((3, 3), 0.7);
    let g = gradient_field(c.view()).unwrap();
    assert!(g.gx.iter().chain(g.gy.iter()).all(|&v| v == 0.0));
    assert!(gradient_field(Array2::<f64>::zeros((1, 5)).view()).is_err());
}

#[test]
fn aolp_wrap_examples() {
    let a = -FRAC_PI_2 + 0.01;
    let b = FRAC_PI_2 - 0.01;
    let w = wrap_aolp_diff(b - a);
    assert!((w + 0.02).abs() < 1e-15, "{w}");
    assert_eq!(wrap_aolp_diff(0.3 - 0.0), 0.3);
    let psi = Array2::from_shape_vec((2, 2), vec![a, b, a, b]).unwrap();
    let g = aolp_gradient(psi.view()).unwrap();
    assert_eq!(g.gx[(0, 0)], w);
    let bad = Array2::from_shape_vec((2, 2), vec![0.0, 2.0, 0.0, 0.0]).unwrap();
    assert!(aolp_gradient(bad.view()).is_err());
    let edge = Array2::from_shape_vec((2, 2), vec![FRAC_PI_2, 0.0, f64::NAN, -1.0]).unwrap();
    assert!(aolp_gradient(edge.view()).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn wrapped_difference_is_odd_and_bounded(a in -FRAC_PI_2..=FRAC_PI_2, b in -FRAC_PI_2..=FRAC_PI_2) {
        prop_assume!(a > -FRAC_PI_2 && b > -FRAC_PI_2);
        let fwd = wrap_aolp_diff(b - a);
        let bwd = wrap_aolp_diff(a - b);
        prop_assert!(fwd.abs() <= FRAC_PI_2);
        if fwd.abs() != FRAC_PI_2 {
            prop_assert_eq!(fwd, -bwd);
        }
        // Same orientation modulo π.
        let r = (fwd - (b - a)) / PI;
        prop_assert!((r - r.round()).abs() < 1e-12);
    }

    #[test]
    fn aolp_gradients_stay_in_range(seed in any::<u64>()) {
        let img = noisy_cube(12, 9, 2, seed);
        let h = feature_gradient_histograms(&[Item::new(&img)], Feature::Aolp, DEFAULT_BINS, &LabelFilter::any()).unwrap();
        prop_assert_eq!(h.pooled.dropped, 0);
        prop_assert!(h.pooled.lo() >= -FRAC_PI_2 && h.pooled.hi() <= FRAC_PI_2);
        let plane = feature_plane(&img, 1, Feature::Aolp);
        let g = aolp_gradient(plane.view()).unwrap();
        let (x, y) = g.finite();
        prop_assert!(x.iter().chain(&y).all(|v| v.abs() <= FRAC_PI_2));
    }

    #[test]
    fn merging_is_partition_independent(seed in any::<u64>(), split in 1usize..199) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..200).map(|_| rng.random_range(-1.2..1.2)).collect();
        let mut whole = Histogram::uniform(-1.0, 1.0, 21).unwrap();
        whole.extend(v.iter().copied());
        let mut a = Histogram::uniform(-1.0, 1.0, 21).unwrap();
        a.extend(v[..split].iter().copied());
        let mut b = Histogram::uniform(-1.0, 1.0, 21).unwrap();
        b.extend(v[split..].iter().copied());
        let mut ab = a.clone();
        ab.merge(&b).unwrap();
        let mut ba = b.clone();
        ba.merge(&a).unwrap();
        prop_assert_eq!(&ab.counts, &whole.counts);
        prop_assert_eq!(ab.total + ab.dropped, 200);
        prop_assert_eq!(ab.dropped, whole.dropped);
        prop_assert_eq!(&ab.counts, &ba.counts);
    }
}

#[test]
fn aolp_gradient_matches_analytic_derivative() {
    // ψ(x, y) = 1.2 + 0.03 x + 0.02 y + 0.1 sin(0.1 y), folded into (-π/2, π/2].
    let psi = |x: f64, y: f64| 1.2 + 0.03 * x + 0.02 * y + 0.1 * (0.1 * y).sin();
    let (w, h) = (80, 60);
    let img = StokesImage::from_fn(w, h, 1, |x, y, _| {
        StokesVector::from_ellipse(1.0, 0.7, psi(x as f64, y as f64), 0.1)
    });
    let plane = feature_plane(&img, 0, Feature::Aolp);
    assert!(plane.iter().any(|v| *v < 0.0) && plane.iter().any(|v| *v > 1.5));
    let g = aolp_gradient(plane.view()).unwrap();
    let mut worst: f64 = 0.0;
    for y in 0..h {
        for x in 0..w - 1 {
            worst = worst.max((g.gx[(y, x)] - 0.03).abs());
        }
    }
    for y in 0..h - 1 {
        for x in 0..w {
            let yc = y as f64 + 0.5;
            let d = 0.02 + 0.01 * (0.1 * yc).cos();
            worst = worst.max((g.gy[(y, x)] - d).abs());
        }
    }
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn symmetric_field_has_zero_mean_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let img = StokesImage::from_fn(256, 256, 1, |_, _, _| {
        StokesVector::new(1.0, rng.random_range(-0.5..0.5), 0.0, 0.0)
    });
    let h = feature_gradient_histograms(&[Item::new(&img)], Feature::S1, DEFAULT_BINS, &LabelFilter::any()).unwrap();
    assert!(h.pooled.mean().abs() < 1e-3, "{}", h.pooled.mean());
    assert_eq!(h.horizontal.total + h.vertical.total, h.pooled.total);
    assert_eq!(h.horizontal.total, 256 * 255);
}

#[test]
fn constant_feature_has_delta_gradient() {
    let img = constant_scene(6, 5, 2, StokesVector::new(1.0, 0.3, 0.2, 0.1));
    for f in Feature::ALL {
        let h = feature_gradient_histograms(&[Item::new(&img)], f, DEFAULT_BINS, &LabelFilter::any()).unwrap();
        assert_eq!(h.pooled.occupied(), vec![100], "{}", f.name());
    }
}

#[test]
fn cop_gradient_takes_sign_steps() {
    let img = StokesImage::from_fn(6, 1, 1, |x, _, _| {
        let s3 = [0.2, -0.2, 0.0, 0.2, 0.2, -0.2][x];
        StokesVector::new(1.0, 0.1, 0.0, s3)
    });
    let plane = feature_plane(&img, 0, Feature::Cop);
    let row: Vec<f64> = plane.row(0).to_vec();
    assert_eq!(row, vec![1.0, -1.0, 0.0, 1.0, 1.0, -1.0]);
    let g = Array2::from_shape_vec((2, 6), [row.clone(), row].concat()).unwrap();
    let gf = gradient_field(g.view()).unwrap();
    assert_eq!(gf.gx.row(0).to_vec(), vec![-2.0, 1.0, 1.0, 0.0, -2.0]);
}

#[test]
fn polarized_plus_unpolarized_conserves_intensity() {
    let img = noisy_cube(40, 30, 3, 7);
    let items = [Item::new(&img)];
    let (p, u) = pol_unpol_histograms(&items, DEFAULT_BINS, &LabelFilter::any()).unwrap();
    let s0 = stokes_histograms(&items, Feature::S0, DEFAULT_BINS, &LabelFilter::any()).unwrap();
    assert_eq!(p.total, s0.total);
    assert_eq!(u.total, s0.total);
    assert!((p.mean() + u.mean() - s0.mean()).abs() < 1e-9);

    let unpol = constant_scene(8, 8, 2, StokesVector::new(0.8, 0.0, 0.0, 0.0));
    let (p, u) = pol_unpol_histograms(&[Item::new(&unpol)], DEFAULT_BINS, &LabelFilter::any()).unwrap();
    assert_eq!(p.occupied(), vec![0]);
    assert_eq!(u.occupied(), vec![DEFAULT_BINS - 1]);
    let pol = constant_scene(8, 8, 2, StokesVector::new(0.8, 0.0, 0.8, 0.0));
    let (p, u) = pol_unpol_histograms(&[Item::new(&pol)], DEFAULT_BINS, &LabelFilter::any()).unwrap();
    assert_eq!(u.occupied(), vec![0]);
    assert_eq!(p.occupied(), vec![DEFAULT_BINS - 1]);
}

#[test]
fn poincare_projection_cells() {
    let horiz = constant_scene(5, 5, 2, StokesVector::new(1.0, 1.0, 0.0, 0.0));
    let g = poincare_density(&[Item::new(&horiz)], PoincarePlane::S1S2, 21, &LabelFilter::any()).unwrap();
    let nonzero: Vec<usize> = (0..g.counts.len()).filter(|&i| g.counts[i] > 0).collect();
    assert_eq!(nonzero, vec![10 * 21 + 20]);
    assert_eq!(g.max(), 1.0);
    assert_eq!(g.total, 50);

    let unpol = constant_scene(5, 5, 2, StokesVector::UNPOLARIZED);
    let g = poincare_density(&[Item::new(&unpol)], PoincarePlane::S1S3, 21, &LabelFilter::any()).unwrap();
    assert_eq!(g.at(10, 10), 1.0);
    assert_eq!(g.counts.iter().filter(|&&c| c > 0).count(), 1);

    let mixed = noisy_cube(20, 20, 3, 9);
    for plane in [PoincarePlane::S1S2, PoincarePlane::S1S3] {
        let g = poincare_density(&[Item::new(&mixed)], plane, 31, &LabelFilter::any()).unwrap();
        assert_eq!(g.max(), 1.0);
        assert_eq!(g.counts.iter().sum::<u64>(), g.total);
    }

    let invalid = constant_scene(2, 2, 1, StokesVector::new(1.0, 0.8, 0.8, 0.0));
    assert!(poincare_density(&[Item::new(&invalid)], PoincarePlane::S1S2, 21, &LabelFilter::any()).is_err());
}

#[test]
fn docp_mass_locations() {
    let circ = constant_scene(4, 4, 2, StokesVector::new(1.0, 0.0, 0.0, -1.0));
    let h = docp_distribution(&[Item::new(&circ)], DEFAULT_BINS, &LabelFilter::any()).unwrap();
    assert_eq!(h.occupied(), vec![DEFAULT_BINS - 1]);
    let lin = constant_scene(4, 4, 2, StokesVector::new(1.0, 0.3, 0.4, 0.0));
    let h = docp_distribution(&[Item::new(&lin)], DEFAULT_BINS, &LabelFilter::any()).unwrap();
    assert_eq!(h.occupied(), vec![0]);
    let h = docp_distribution(
        &[Item::new(&noisy_cube(10, 10, 2, 1))],
        DEFAULT_BINS,
        &LabelFilter::any(),
    )
    .unwrap();
    assert_eq!((h.lo(), h.hi(), h.dropped), (0.0, 1.0, 0));
}

#[test]
fn label_filters_are_set_intersections() {
    let a = noisy_cube(6, 6, 2, 1);
    let b = noisy_cube(6, 6, 2, 2);
    let c = noisy_cube(6, 6, 2, 3);
    let la = labels(Environment::Indoor, Illumination::White, SceneType::Object);
    let lb = labels(Environment::Outdoor, Illumination::Sunlight, SceneType::Scene);
    let lc = labels(Environment::Outdoor, Illumination::Cloudy, SceneType::Object);
    let items = [Item::labeled(&a, &la), Item::labeled(&b, &lb), Item::labeled(&c, &lc)];
    let run = |f: &LabelFilter| stokes_histograms(&items, Feature::Dolp, DEFAULT_BINS, f);

    let all = run(&LabelFilter::any()).unwrap();
    let union = LabelFilter {
        environment: vec![Environment::Indoor, Environment::Outdoor],
        ..LabelFilter::any()
    };
    assert_eq!(run(&union).unwrap(), all);

    let indoor = run(&LabelFilter {
        environment: vec![Environment::Indoor],
        ..LabelFilter::any()
    })
    .unwrap();
    let outdoor = run(&LabelFilter {
        environment: vec![Environment::Outdoor],
        ..LabelFilter::any()
    })
    .unwrap();
    let mut merged = indoor.clone();
    merged.merge(&outdoor).unwrap();
    assert_eq!(merged.counts, all.counts);

    let only_c = LabelFilter {
        environment: vec![Environment::Outdoor],
        scene_type: vec![SceneType::Object],
        ..LabelFilter::any()
    };
    assert_eq!(
        run(&only_c).unwrap(),
        stokes_histograms(&[Item::new(&c)], Feature::Dolp, DEFAULT_BINS, &LabelFilter::any()).unwrap()
    );
    let none = LabelFilter {
        illumination: vec![Illumination::Incandescent],
        ..LabelFilter::any()
    };
    assert!(run(&none).is_err());

    // Unlabeled images only count without a constraint.
    let mixed = [Item::new(&a), Item::labeled(&b, &lb)];
    let h = stokes_histograms(&mixed, Feature::Dolp, DEFAULT_BINS, &only_c);
    assert!(h.is_err());
    assert_eq!(
        stokes_histograms(&mixed, Feature::Dolp, DEFAULT_BINS, &LabelFilter::any())
            .unwrap()
            .total,
        144
    );
}

#[test]
fn aggregation_ignores_image_order_and_threads() {
    let imgs: Vec<StokesImage> = (0..4)
        .map(|s| {
            smooth_scene(
                &SceneSpec {
                    width: 24,
                    height: 16,
                    ..SceneSpec::default()
                },
                s,
            )
        })
        .collect();
    let fwd: Vec<Item> = imgs.iter().map(Item::new).collect();
    let rev: Vec<Item> = imgs.iter().rev().map(Item::new).collect();
    for f in [Feature::S1, Feature::Aolp, Feature::Dolp] {
        let a = stokes_histograms(&fwd, f, DEFAULT_BINS, &LabelFilter::any()).unwrap();
        let b = stokes_histograms(&rev, f, DEFAULT_BINS, &LabelFilter::any()).unwrap();
        assert_eq!(a.counts, b.counts);
        assert_eq!(a.edges, b.edges);
    }
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a =
        one.install(|| feature_gradient_histograms(&fwd, Feature::Aolp, DEFAULT_BINS, &LabelFilter::any()).unwrap());
    let b =
        four.install(|| feature_gradient_histograms(&fwd, Feature::Aolp, DEFAULT_BINS, &LabelFilter::any()).unwrap());
    assert_eq!(a, b);
}

#[test]
fn normal_std_examples() {
    let same = NormalMapStack::from_fn(4, 3, 3, |_, _, _| [0.6, 0.0, 0.8]).unwrap();
    let s = normal_spectral_stddev(&same, 11).unwrap();
    assert!(s
        .std_x
        .iter()
        .chain(&s.std_y)
        .chain(&s.std_z)
        .chain(&s.std_azimuth)
        .chain(&s.std_elevation)
        .all(|&v| v.abs() < 1e-7));

    let two = NormalMapStack::from_fn(
        2,
        2,
        2,
        |_, _, c| if c == 0 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] },
    )
    .unwrap();
    let s = normal_spectral_stddev(&two, 11).unwrap();
    assert!(s.std_x.iter().all(|&v| (v - 0.5).abs() < 1e-12));
    assert!(s.std_y.iter().all(|&v| (v - 0.5).abs() < 1e-12));
    assert!(s.std_z.iter().all(|&v| v == 0.0));

    let a = 179f64.to_radians();
    let wrap = NormalMapStack::from_fn(1, 1, 2, |_, _, c| {
        let t = if c == 0 { -a } else { a };
        [t.cos(), t.sin(), 0.0]
    })
    .unwrap();
    let s = normal_spectral_stddev(&wrap, 11).unwrap();
    assert!(
        (s.std_azimuth[0].to_degrees() - 1.0).abs() < 1e-3,
        "{}",
        s.std_azimuth[0].to_degrees()
    );

    assert!(NormalMapStack::from_fn(2, 2, 1, |_, _, _| [0.0, 0.0, 1.0]).is_err());
    assert!(NormalMapStack::from_fn(2, 2, 2, |_, _, _| [0.0, 0.0, 1.1]).is_err());
}

#[test]
fn normal_std_is_channel_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let normals: Vec<[f64; 3]> = (0..6 * 5 * 7)
        .map(|_| {
            let az: f64 = rng.random_range(-PI..PI);
            let el: f64 = rng.random_range(0.0..FRAC_PI_2);
            [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()]
        })
        .collect();
    let perm = [3usize, 0, 6, 2, 5, 1, 4];
    let a = NormalMapStack::from_fn(6, 5, 7, |x, y, c| normals[(c * 5 + y) * 6 + x]).unwrap();
    let b = NormalMapStack::from_fn(6, 5, 7, |x, y, c| normals[(perm[c] * 5 + y) * 6 + x]).unwrap();
    let (sa, sb) = (
        normal_spectral_stddev(&a, 21).unwrap(),
        normal_spectral_stddev(&b, 21).unwrap(),
    );
    assert_eq!(sa.std_x, sb.std_x);
    assert_eq!(sa.std_y, sb.std_y);
    assert_eq!(sa.std_z, sb.std_z);
    assert_eq!(sa.std_azimuth, sb.std_azimuth);
    assert_eq!(sa.hist_x, sb.hist_x);
}

#[test]
fn feature_values_agree_with_features() {
    let img = noisy_cube(5, 5, 1, 4);
    for (x, y, c, s) in img.valid_vectors() {
        let f = features(s).unwrap();
        assert_eq!(feature_plane(&img, c, Feature::Dolp)[(y, x)], f.dolp);
        assert_eq!(Feature::Aolp.value(s), Some(f.psi));
    }
    assert_eq!(Feature::Aolp.value(StokesVector::new(1.0, 0.0, 0.0, 0.5)), None);
    for f in Feature::ALL {
        assert_eq!(Feature::parse(f.name()), Some(f));
    }
}
