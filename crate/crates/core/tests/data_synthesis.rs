use equivcnp::data::*;
use equivcnp::linalg::cholesky;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn kernel_values() {
    for kind in KernelKind::ALL {
        let k = KernelSpec::new(kind);
        assert_eq!(kernel_eval(&k, 0.37, 0.37), 1.0);
    }
    let rbf = KernelSpec::new(KernelKind::Rbf);
    assert!((kernel_eval(&rbf, 0.0, 1.0) - 0.606_530_659_712_633_4).abs() < 1e-15);
    let per = KernelSpec::new(KernelKind::Periodic);
    assert!((kernel_eval(&per, 0.0, 1.0) - 1.0).abs() < 1e-15);
    assert!((kernel_eval(&per, 2.0, -1.0) - 1.0).abs() < 1e-14);
    // sin^2(pi/2) = 1
    assert!((kernel_eval(&per, 0.0, 0.5) - (-2f64).exp()).abs() < 1e-15);
    let m = KernelSpec::new(KernelKind::Matern52);
    let s = 5f64.sqrt();
    let expected = (1.0 + s + 5.0 / 3.0) * (-s).exp();
    assert!((kernel_eval(&m, 1.0, 0.0) - expected).abs() < 1e-15);
}

#[test]
fn kernels_are_positive_definite_on_random_sets() {
    let mut r = rng(1);
    for kind in KernelKind::ALL {
        let spec = KernelSpec::new(kind);
        for _ in 0..50 {
            let xs: Vec<f64> = (0..30).map(|_| r.random_range(-4.0..4.0)).collect();
            let mut k = spec.matrix(&xs, &xs);
            for i in 0..30 {
                k[i * 30 + i] += spec.jitter;
            }
            // Periodic sets can be numerically rank deficient; the sampler's
            // escalation covers those, plain factorisation must work for the rest.
            if kind != KernelKind::Periodic {
                assert!(cholesky(&k, 30).is_some(), "{kind} not PD");
            }
            assert!(gp_sample(&spec, &xs, &mut r).is_ok());
        }
    }
}

#[test]
fn single_point_sample_is_standard_normal() {
    let spec = KernelSpec::new(KernelKind::Rbf);
    let mut r = rng(2);
    let n = 20_000;
    let ys: Vec<f64> = (0..n)
        .map(|_| gp_sample(&spec, &[0.3], &mut r).unwrap()[0])
        .collect();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let var = ys.iter().map(|y| y * y).sum::<f64>() / n as f64;
    assert!(mean.abs() < 0.03, "mean {mean}");
    assert!((var - 1.0).abs() < 0.04, "var {var}");
}

#[test]
fn empirical_covariance_matches_kernel() {
    let pairs: [(KernelKind, [f64; 2]); 6] = [
        (KernelKind::Rbf, [0.0, 0.1]),
        (KernelKind::Rbf, [-1.0, -0.5]),
        (KernelKind::Matern52, [0.0, 0.1]),
        (KernelKind::Matern52, [1.2, 1.7]),
        (KernelKind::Periodic, [0.0, 0.1]),
        (KernelKind::Periodic, [0.5, 1.5]),
    ];
    for (i, (kind, xs)) in pairs.into_iter().enumerate() {
        let spec = KernelSpec::new(kind);
        let mut r = rng(100 + i as u64);
        let n = 10_000;
        let mut m = [0.0f64; 3];
        for _ in 0..n {
            let y = gp_sample(&spec, &xs, &mut r).unwrap();
            m[0] += y[0] * y[0];
            m[1] += y[0] * y[1];
            m[2] += y[1] * y[1];
        }
        let m = m.map(|v| v / n as f64);
        let k = kernel_eval(&spec, xs[0], xs[1]);
        for (est, exact) in [(m[0], 1.0), (m[1], k), (m[2], 1.0)] {
            let rel = (est - exact).abs() / exact;
            assert!(rel < 0.05, "{kind} at {xs:?}: {est} vs {exact}");
        }
    }
}

#[test]
fn sampling_is_deterministic() {
    let spec = KernelSpec::new(KernelKind::Matern52);
    let xs = [-1.0, 0.2, 0.5, 1.9];
    let a = gp_sample(&spec, &xs, &mut rng(7)).unwrap();
    let b = gp_sample(&spec, &xs, &mut rng(7)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn jitter_must_be_positive() {
    let spec = KernelSpec {
        kind: KernelKind::Rbf,
        jitter: 0.0,
    };
    assert!(gp_sample(&spec, &[0.0], &mut rng(0)).is_err());
}

#[test]
fn task_counts_and_range() {
    let cfg = TaskConfig1D::new(KernelKind::Rbf);
    let mut r = rng(3);
    let (mut lo_c, mut hi_c) = (usize::MAX, 0);
    for _ in 0..2000 {
        let t = sample_task_1d(&cfg, &mut r).unwrap();
        let (nc, nt) = (t.num_context(), t.num_targets());
        assert!((3..=50).contains(&nc) && (3..=50).contains(&nt));
        lo_c = lo_c.min(nc);
        hi_c = hi_c.max(nc);
        for p in t.context_x.iter().chain(&t.target_x) {
            assert!((-2.0..=2.0).contains(&p[0]) && p[1] == 0.0);
        }
    }
    assert_eq!((lo_c, hi_c), (3, 50));
    let ex = cfg.extrapolation();
    assert_eq!(ex.x_range, [-4.0, 4.0]);
    let mut wide = false;
    for _ in 0..50 {
        let t = sample_task_1d(&ex, &mut r).unwrap();
        wide |= t.context_x.iter().any(|p| p[0].abs() > 2.0);
        assert!(t.context_x.iter().all(|p| p[0].abs() <= 4.0));
    }
    assert!(wide);
}

#[test]
fn shared_location_shares_value() {
    let spec = KernelSpec::new(KernelKind::Rbf);
    let t = task_from_locations(&spec, &[-1.0, 0.3, 1.0], &[0.3, 1.5], &mut rng(4)).unwrap();
    assert_eq!(t.context_y[1], t.target_y.as_ref().unwrap()[0]);
}

#[test]
fn bad_task_config_is_rejected() {
    let mut cfg = TaskConfig1D::new(KernelKind::Rbf);
    cfg.n_context_range = [0, 5];
    assert!(sample_task_1d(&cfg, &mut rng(0)).is_err());
    let mut cfg = TaskConfig1D::new(KernelKind::Rbf);
    cfg.x_range = [1.0, 1.0];
    assert!(cfg.validate().is_err());
}

proptest! {
    #[test]
    fn kernels_are_symmetric(a in -5.0f64..5.0, b in -5.0f64..5.0) {
        for kind in KernelKind::ALL {
            let k = KernelSpec::new(kind);
            prop_assert_eq!(kernel_eval(&k, a, b), kernel_eval(&k, b, a));
            let v = kernel_eval(&k, a, b);
            prop_assert!(v > 0.0 && v <= 1.0);
        }
    }

    #[test]
    fn samples_are_exchangeable(
        xs in prop::collection::vec(-3.0f64..3.0, 1..12),
        seed in any::<u64>(),
        shift in 0usize..12,
    ) {
        let spec = KernelSpec::new(KernelKind::Rbf);
        let n = xs.len();
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + shift) % n).collect();
        // only a bijection when gcd(7, n) = 1
        prop_assume!(n % 7 != 0);
        let permuted: Vec<f64> = perm.iter().map(|&i| xs[i]).collect();
        let a = gp_sample(&spec, &xs, &mut rng(seed)).unwrap();
        let b = gp_sample(&spec, &permuted, &mut rng(seed)).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(b[k], a[i]);
        }
    }

    #[test]
    fn transform_keeps_unit_range(label in 0u8..10, scale in 0.1f64..2.0, angle in -3.2f64..3.2) {
        let img = render_digit(label).unwrap();
        let out = transform_image(&img, scale, angle).unwrap();
        prop_assert!(out.pixels.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn digits_render() {
    for d in 0..10u8 {
        let img = render_digit(d).unwrap();
        assert_eq!(img.pixels.len(), IMAGE_SIZE * IMAGE_SIZE);
        assert!(img.pixels.iter().all(|&v| v == 0.0 || v == 1.0));
        let h = img.glyph_height();
        assert!(h.abs_diff(GLYPH_HEIGHT) <= 1, "digit {d} height {h}");
        let (c0, c1) = img.col_extent(0.5).unwrap();
        assert_eq!(c0 + c1, IMAGE_SIZE - 1, "digit {d} not centred");
    }
    assert_eq!(lit_segments(8), 7);
    assert_eq!(lit_segments(1), 2);
    let eight: f64 = render_digit(8).unwrap().pixels.iter().sum();
    for d in 0..10u8 {
        if d != 8 {
            assert!(render_digit(d).unwrap().pixels.iter().sum::<f64>() < eight);
        }
    }
    assert!(render_digit(10).is_err());
    assert_eq!(digit_set().len(), 10);
}

#[test]
fn identity_transform() {
    let img = render_digit(5).unwrap();
    let out = transform_image(&img, 1.0, 0.0).unwrap();
    let diff = img
        .pixels
        .iter()
        .zip(&out.pixels)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-12);
}

#[test]
fn quarter_turns_compose() {
    use std::f64::consts::{FRAC_PI_2, PI};
    let img = render_digit(2).unwrap();
    let twice = transform_image(&transform_image(&img, 1.0, FRAC_PI_2).unwrap(), 1.0, FRAC_PI_2).unwrap();
    let direct = transform_image(&img, 1.0, PI).unwrap();
    let diff = twice
        .pixels
        .iter()
        .zip(&direct.pixels)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-6, "{diff}");
    assert!((twice.angle - PI).abs() < 1e-15);
    // a half turn maps pixel (r, c) to (63 - r, 63 - c)
    let n = IMAGE_SIZE;
    for r in 0..n {
        for c in 0..n {
            assert!((direct.get(r, c) - img.get(n - 1 - r, n - 1 - c)).abs() < 1e-9);
        }
    }
}

#[test]
fn rotation_is_counter_clockwise() {
    let img = render_digit(1).unwrap();
    // digit 1 sits on the vertical centre line; a quarter turn lays it flat
    let out = transform_image(&img, 1.0, std::f64::consts::FRAC_PI_2).unwrap();
    assert!(out.glyph_height() <= 7);
    let (c0, c1) = out.col_extent(0.5).unwrap();
    assert!(c1 - c0 + 1 >= 55);
}

#[test]
fn half_scale_halves_height() {
    for d in [0u8, 1, 7, 8] {
        let img = transform_image(&render_digit(d).unwrap(), 0.5, 0.0).unwrap();
        let h = img.glyph_height();
        assert!(h.abs_diff(28) <= 2, "digit {d}: {h}");
        assert_eq!(img.scale, 0.5);
    }
    assert!(transform_image(&render_digit(0).unwrap(), 0.0, 0.0).is_err());
}

#[test]
fn test_transforms_stay_in_range() {
    let mut r = rng(5);
    for _ in 0..500 {
        let (s, a) = random_transform(TransformMode::Both, &mut r);
        assert!((0.15..=0.5).contains(&s));
        assert!(a.abs() <= std::f64::consts::FRAC_PI_2 + 1e-12);
        let (s, a) = random_transform(TransformMode::Scale, &mut r);
        assert!((0.15..=0.5).contains(&s) && a == 0.0);
    }
    assert_eq!(random_transform(TransformMode::None, &mut r), (1.0, 0.0));
}

#[test]
fn mask_density() {
    let img = render_digit(3).unwrap();
    let mut r = rng(6);
    let draws = 10_000;
    let mut total = 0.0;
    for _ in 0..draws {
        let obs = sample_image_task(&img, &mut r).unwrap();
        total += obs.mask.iter().sum::<f64>() / obs.mask.len() as f64;
    }
    let density = total / draws as f64;
    assert!((0.24..=0.27).contains(&density), "{density}");
}

#[test]
fn fixed_rate_masks() {
    let img = render_digit(4).unwrap();
    let mut r = rng(8);
    for rate in [0.25, 0.75] {
        let obs = image_task_with_rate(&img, rate, &mut r).unwrap();
        let d = obs.mask.iter().sum::<f64>() / obs.mask.len() as f64;
        assert!((d - rate).abs() < 0.03);
        let t = obs.to_task_set();
        assert_eq!(t.num_targets(), IMAGE_SIZE * IMAGE_SIZE);
        assert_eq!(t.num_context() as f64, obs.mask.iter().sum::<f64>());
        assert!(t.target_x.iter().all(|p| p[0] != 0.0 || p[1] != 0.0));
    }
    let empty = image_task_with_rate(&img, 0.0, &mut r).unwrap();
    assert_eq!(empty.to_task_set().num_context(), 0);
    assert!(bernoulli_mask(1.5, &mut r).is_err());
}

#[test]
fn task_dump_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TaskConfig1D::new(KernelKind::Periodic);
    let t = sample_task_1d(&cfg, &mut rng(9)).unwrap();
    let path = dir.path().join("task.csv");
    write_task(&path, "gp1d", &t, 1, &[("kernel", "periodic".into())]).unwrap();
    let back = read_task(&path).unwrap();
    assert_eq!(back.task, t);
    assert_eq!(back.get("kind"), Some("gp1d"));
    assert_eq!(back.get("kernel"), Some("periodic"));
    assert_eq!(back.input_dim, 1);

    let img = render_digit(6).unwrap();
    let t2 = image_task_with_rate(&img, 0.1, &mut rng(10)).unwrap().to_task_set();
    let p2 = dir.path().join("image.csv");
    write_task(&p2, "digits", &t2, 2, &[("scale", "1".into())]).unwrap();
    let back = read_task(&p2).unwrap();
    assert_eq!(back.task, t2);
    assert_eq!(back.get_f64("scale"), Some(1.0));

    std::fs::write(&p2, "# kind=x input_dim=1 n_context=1 n_target=1\n0.5,1\n").unwrap();
    assert!(read_task(&p2).is_err());
    std::fs::write(&p2, "kind=x\n").unwrap();
    assert!(read_task(&p2).is_err());
}

#[test]
fn pgm_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("digit.pgm");
    let img = transform_image(&render_digit(9).unwrap(), 0.7, 0.4).unwrap();
    write_pgm(&path, IMAGE_SIZE, IMAGE_SIZE, &img.pixels).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert!(bytes.starts_with(b"P5\n64 64\n255\n"));
    let (w, h, v) = read_pgm(&path).unwrap();
    assert_eq!((w, h), (64, 64));
    for (a, b) in img.pixels.iter().zip(&v) {
        assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
    }
    write_pgm(&path, 2, 1, &[-1.0, 3.0]).unwrap();
    assert_eq!(read_pgm(&path).unwrap().2, vec![0.0, 1.0]);
    assert!(write_pgm(&path, 2, 2, &[0.0]).is_err());
}

#[test]
fn conditional_draws_complete_the_joint_covariance() {
    // y0 from the prior, then y1 | y0: the pair must carry the kernel's covariance
    for (i, kind) in KernelKind::ALL.into_iter().enumerate() {
        let spec = KernelSpec::new(kind);
        let (x0, x1) = (0.3, 0.8);
        let mut r = rng(300 + i as u64);
        let n = 10_000;
        let mut m = [0.0f64; 3];
        for _ in 0..n {
            let y0 = gp_sample(&spec, &[x0], &mut r).unwrap()[0];
            let y1 = gp_conditional_sample(&spec, &[x0], &[y0], &[x1], &mut r).unwrap()[0];
            m[0] += y0 * y0;
            m[1] += y0 * y1;
            m[2] += y1 * y1;
        }
        let m = m.map(|v| v / n as f64);
        let k = kernel_eval(&spec, x0, x1);
        // Monte Carlo standard error of each moment is at most sqrt(2 / n) ~ 0.014
        for (est, exact) in [(m[0], 1.0), (m[1], k), (m[2], 1.0)] {
            assert!((est - exact).abs() < 0.05, "{kind}: {est} vs {exact}");
        }
    }
}

#[test]
fn conditional_draw_at_an_observed_location_repeats_it() {
    let spec = KernelSpec::new(KernelKind::Rbf);
    let xs = [-1.0, 0.0, 1.5];
    let ys = gp_sample(&spec, &xs, &mut rng(8)).unwrap();
    let again = gp_conditional_sample(&spec, &xs, &ys, &[0.0], &mut rng(9)).unwrap();
    assert!((again[0] - ys[1]).abs() < 1e-3);
}

#[test]
fn extended_tasks_keep_the_in_range_points() {
    let cfg = TaskConfig1D::new(KernelKind::Matern52);
    let mut r = rng(21);
    for _ in 0..20 {
        let task = sample_task_1d(&cfg, &mut r).unwrap();
        let wide = extend_task_1d(&cfg, &task, [-4.0, 4.0], &mut r).unwrap();
        let (nc, nt) = (task.num_context(), task.num_targets());
        assert_eq!(wide.num_context(), 2 * nc);
        assert_eq!(wide.num_targets(), 2 * nt);
        assert_eq!(&wide.context_x[..nc], &task.context_x[..]);
        assert_eq!(&wide.context_y[..nc], &task.context_y[..]);
        assert_eq!(&wide.target_y.as_ref().unwrap()[..nt], &task.target_y.as_ref().unwrap()[..]);
        for p in wide.context_x[nc..].iter().chain(&wide.target_x[nt..]) {
            assert!(p[0].abs() >= 2.0 && p[0] < 4.0 && p[0] >= -4.0, "{}", p[0]);
        }
    }
    assert!(extend_task_1d(&cfg, &sample_task_1d(&cfg, &mut r).unwrap(), [-1.0, 4.0], &mut r).is_err());
}
