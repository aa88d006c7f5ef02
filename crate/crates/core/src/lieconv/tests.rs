use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{ParamStore, Tape, Tensor};
use crate::gradcheck::{central_difference, max_relative_error, STEP};
use crate::lie::{lift_all, GroupElement, GroupTag, LiftedPoint, Point};
use crate::Error;

fn random_points(tag: GroupTag, n: usize, rng: &mut ChaCha8Rng) -> Vec<Point<f64>> {
    (0..n)
        .map(|_| {
            let x = rng.random_range(-2.0..2.0);
            if tag == GroupTag::T1 {
                [x, 0.0]
            } else {
                [x, rng.random_range(-2.0..2.0)]
            }
        })
        .collect()
}

fn random_features(n: usize, c: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::new(vec![n, c], (0..n * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn layer(tag: GroupTag, c_in: usize, c_out: usize, separable: bool, seed: u64) -> (ParamStore<f64>, LieConvLayer) {
    let mut store = ParamStore::new();
    let mut spec = LieConvSpec::new(tag, c_in, c_out);
    spec.separable = separable;
    spec.fraction = 0.3;
    let l = LieConvLayer::new(&mut store, "conv", spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    (store, l)
}

fn run(
    l: &LieConvLayer,
    store: &ParamStore<f64>,
    pts: &[LiftedPoint<f64>],
    f: &Tensor<f64>,
) -> Tensor<f64> {
    let tape = Tape::new();
    let fv = tape.constant(f.clone());
    let geom = l.geometry(pts, pts, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    l.forward(&tape, store, &geom, &fv).unwrap().value().clone()
}

#[test]
fn identity_kernel_averages_neighbours() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut store, l) = layer(GroupTag::T2, 3, 3, false, 2);
    let w = store.value_mut(l.mlp.output_param());
    w.fill(0.0);
    let h = l.mlp.augmented_width() - 1;
    for c in 0..3 {
        w.data_mut()[(h * 3 + c) * 3 + c] = 1.0;
    }
    let xs = random_points(GroupTag::T2, 40, &mut rng);
    let pts = lift_all(&xs, GroupTag::T2, 1, &mut rng).unwrap();
    let f = random_features(40, 3, &mut rng);
    let out = run(&l, &store, &pts, &f);
    let r = calibrate_radius(&pts, 0.3, 1.0).unwrap();
    for (i, c) in pts.iter().enumerate() {
        let nb = neighborhood(c, &pts, r, 1.0).unwrap();
        for ch in 0..3 {
            let mean: f64 = nb.iter().map(|&j| f.row(j)[ch]).sum::<f64>() / nb.len() as f64;
            assert!((out.row(i)[ch] - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn single_point_collapses_to_kernel_times_feature() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (store, l) = layer(GroupTag::SO2, 2, 3, false, 6);
    let pts = lift_all(&[[0.3, 1.2]], GroupTag::SO2, 1, &mut rng).unwrap();
    let f = random_features(1, 2, &mut rng);
    let tape = Tape::new();
    let full = crate::autodiff::Segments { offsets: vec![0, 1], src: vec![0] };
    let geom = PairGeometry::build(&pts, &pts, &full, 1.0, None, &mut rng).unwrap();
    let out = l.forward(&tape, &store, &geom, &tape.constant(f.clone())).unwrap();
    let q = pts[0].q.unwrap();
    let k = l.mlp.eval(&store, &[0.0, q, q]).unwrap();
    for o in 0..3 {
        let expect: f64 = (0..2).map(|c| k.row(o)[c] * f.row(0)[c]).sum();
        assert!((out.value().row(0)[o] - expect).abs() < 1e-12);
    }
}

#[test]
fn equivariance_in_exact_regime() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for tag in GroupTag::ALL {
        let (store, l) = layer(tag, 2, 3, false, 12);
        for _ in 0..5 {
            let xs = random_points(tag, 30, &mut rng);
            let pts = lift_all(&xs, tag, 1, &mut rng).unwrap();
            let f = random_features(30, 2, &mut rng);
            let g = GroupElement::random(tag, 2.0, &mut rng);
            let moved: Vec<_> = if tag == GroupTag::SE2 {
                pts.iter().map(|p| p.transformed(&g).unwrap()).collect()
            } else {
                let gx: Vec<_> = xs.iter().map(|&x| g.act(x)).collect();
                lift_all(&gx, tag, 1, &mut rng).unwrap()
            };
            let a = run(&l, &store, &pts, &f);
            let b = run(&l, &store, &moved, &f);
            assert!(a.max_abs_diff(&b) < 1e-6, "{tag}: {}", a.max_abs_diff(&b));
        }
    }
}

#[test]
fn output_is_linear_in_features() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for separable in [false, true] {
        let (store, l) = layer(GroupTag::RxSO2, 3, 2, separable, 22);
        let xs = random_points(GroupTag::RxSO2, 25, &mut rng);
        let pts = lift_all(&xs, GroupTag::RxSO2, 1, &mut rng).unwrap();
        let f1 = random_features(25, 3, &mut rng);
        let f2 = random_features(25, 3, &mut rng);
        let mut mix = f1.map(|x| 2.0 * x);
        mix.add_assign(&f2.map(|x| -0.5 * x)).unwrap();
        let lhs = run(&l, &store, &pts, &mix);
        let mut rhs = run(&l, &store, &pts, &f1).map(|x| 2.0 * x);
        rhs.add_assign(&run(&l, &store, &pts, &f2).map(|x| -0.5 * x)).unwrap();
        assert!(lhs.max_abs_diff(&rhs) < 1e-9);
    }
}

fn readout_loss(
    l: &LieConvLayer,
    store: &ParamStore<f64>,
    geom: &PairGeometry<f64>,
    f: &Tensor<f64>,
    w: &Tensor<f64>,
) -> f64 {
    let tape = Tape::new();
    let out = l.forward(&tape, store, geom, &tape.constant(f.clone())).unwrap();
    let p = tape.mul(&out, &tape.constant(w.clone())).unwrap();
    tape.sum(&p).value().item()
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for separable in [false, true] {
        let (mut store, l) = layer(GroupTag::SE2, 2, 2, separable, 32);
        // self pairs embed to 0; nonzero biases keep them off the ReLU kink
        for id in l.param_ids() {
            if store.name(id).contains(".b") {
                let shape = store.value(id).shape().to_vec();
                *store.value_mut(id) = random_features(shape[0], shape[1], &mut rng);
            }
        }
        let xs = random_points(GroupTag::SE2, 12, &mut rng);
        let pts = lift_all(&xs, GroupTag::SE2, 1, &mut rng).unwrap();
        let geom = l.geometry(&pts, &pts, &mut rng).unwrap();
        let f = random_features(12, 2, &mut rng);
        let w = random_features(12, 2, &mut rng);

        let tape = Tape::new();
        let fv = tape.variable(f.clone());
        let out = l.forward(&tape, &store, &geom, &fv).unwrap();
        let loss = tape.sum(&tape.mul(&out, &tape.constant(w.clone())).unwrap());
        let grads = tape.backward(&loss).unwrap();
        let df = grads.wrt(&fv).unwrap().clone();
        let pg = grads.param_grads(&store);

        let num_f = central_difference(
            |p| readout_loss(&l, &store, &geom, p, &w),
            &f,
            STEP,
        );
        assert!(max_relative_error(&df, &num_f, 1e-6) < 1e-3);

        for id in l.param_ids() {
            let x = store.value(id).clone();
            let num = central_difference(
                |p| {
                    *store.value_mut(id) = p.clone();
                    readout_loss(&l, &store, &geom, &f, &w)
                },
                &x,
                STEP,
            );
            *store.value_mut(id) = x;
            let analytic = pg.get(id).cloned().unwrap_or_else(|| Tensor::zeros(num.shape()));
            let err = max_relative_error(&analytic, &num, 1e-6);
            assert!(err < 1e-3, "{} err {err}", store.name(id));
        }
    }
}

#[test]
fn separable_matches_full_at_one_input_channel() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for tag in GroupTag::ALL {
        let (mut store, full) = layer(tag, 1, 4, false, 42);
        let mut sep_spec = full.spec.clone();
        sep_spec.separable = true;
        let sep = LieConvLayer::new(&mut store, "sep", sep_spec, &mut rng).unwrap();
        for (a, b) in full.mlp.param_ids().iter().zip(sep.mlp.param_ids()).take(full.mlp.hidden.len() * 2) {
            *store.value_mut(b) = store.value(*a).clone();
        }
        // full kernel = depthwise weight times pointwise row
        let wd = store.value(sep.mlp.output_param()).clone();
        let wp = store.value(sep.pointwise.unwrap()).clone();
        *store.value_mut(full.mlp.output_param()) = wd.matmul(&wp).unwrap();

        let xs = random_points(tag, 30, &mut rng);
        let pts = lift_all(&xs, tag, 1, &mut rng).unwrap();
        let f = random_features(30, 1, &mut rng);
        let a = run(&full, &store, &pts, &f);
        let b = run(&sep, &store, &pts, &f);
        assert!(a.max_abs_diff(&b) < 1e-10, "{tag}");
    }
}

#[test]
fn separable_with_unit_kernel_averages() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let (mut store, l) = layer(GroupTag::T1, 2, 2, true, 52);
    let h = l.mlp.augmented_width() - 1;
    let wd = store.value_mut(l.mlp.output_param());
    wd.fill(0.0);
    wd.data_mut()[h * 2] = 1.0;
    wd.data_mut()[h * 2 + 1] = 1.0;
    *store.value_mut(l.pointwise.unwrap()) = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let xs = random_points(GroupTag::T1, 20, &mut rng);
    let pts = lift_all(&xs, GroupTag::T1, 1, &mut rng).unwrap();
    let f = random_features(20, 2, &mut rng);
    let out = run(&l, &store, &pts, &f);
    let r = calibrate_radius(&pts, 0.3, 1.0).unwrap();
    for (i, c) in pts.iter().enumerate() {
        let nb = neighborhood(c, &pts, r, 1.0).unwrap();
        for ch in 0..2 {
            let mean: f64 = nb.iter().map(|&j| f.row(j)[ch]).sum::<f64>() / nb.len() as f64;
            assert!((out.row(i)[ch] - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn separable_has_fewer_parameters() {
    let (store, full) = layer(GroupTag::T2, 128, 128, false, 1);
    let (store_s, sep) = layer(GroupTag::T2, 128, 128, true, 1);
    let hidden = 2 * 32 + 32 + 32 * 32 * 2 + 32 * 2;
    assert_eq!(full.num_params(&store), hidden + 33 * 128 * 128);
    assert_eq!(sep.num_params(&store_s), hidden + 33 * 128 + 128 * 128);
    assert!(sep.num_params(&store_s) < full.num_params(&store));
    assert_eq!(full.mlp.output_len(), 128 * 128);
    assert_eq!(sep.mlp.output_len(), 128);
}

#[test]
fn empty_neighbourhood_gives_zeros() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let (store, l) = layer(GroupTag::T1, 1, 2, false, 62);
    let sources = lift_all(&[[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]], GroupTag::T1, 1, &mut rng).unwrap();
    let centers = lift_all(&[[100.0, 0.0]], GroupTag::T1, 1, &mut rng).unwrap();
    let tape = Tape::new();
    let f = tape.constant(Tensor::ones(&[3, 1]));
    let out = lieconv_forward(&l, &tape, &store, &centers, &sources, &f, &mut rng).unwrap();
    assert_eq!(out.value().data(), &[0.0, 0.0]);
}

#[test]
fn channel_mismatch_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let (store, l) = layer(GroupTag::T1, 2, 2, false, 72);
    let pts = lift_all(&[[0.0, 0.0], [1.0, 0.0]], GroupTag::T1, 1, &mut rng).unwrap();
    let tape = Tape::new();
    let f = tape.constant(Tensor::ones(&[2, 3]));
    assert!(matches!(
        lieconv_forward(&l, &tape, &store, &pts, &pts, &f, &mut rng),
        Err(Error::Dimension(_))
    ));
    assert!(separable_lieconv_forward(&l, &tape, &store, &pts, &pts, &f, &mut rng).is_err());
}

#[test]
fn monte_carlo_caps_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(81);
    let (mut store, _) = layer(GroupTag::T2, 1, 1, false, 82);
    let mut spec = LieConvSpec::new(GroupTag::T2, 1, 1);
    spec.fraction = 0.5;
    spec.n_mc = Some(10);
    let l = LieConvLayer::new(&mut store, "mc", spec, &mut rng).unwrap();
    let xs = random_points(GroupTag::T2, 60, &mut rng);
    let pts = lift_all(&xs, GroupTag::T2, 1, &mut rng).unwrap();
    let geom = l.geometry(&pts, &pts, &mut rng).unwrap();
    for i in 0..60 {
        assert!(geom.segments.range(i).len() <= 10);
    }
    assert!(geom.mean_neighbors() > 9.0);
}
