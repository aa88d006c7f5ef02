use equivcnp::autodiff::*;
use equivcnp::gradcheck::{central_difference, max_relative_error, STEP};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor<f64> {
    Tensor::new(vec![r, c], (0..r * c).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

/// `sum(w * softplus(x a + b)) + sum(exp(0.3 x))`, a small network-shaped loss.
fn composite(tape: &Tape<f64>, x: &Var<f64>, a: &Var<f64>, b: &Var<f64>, w: &Tensor<f64>) -> Var<f64> {
    let h = tape.affine(x, a, b).unwrap();
    let h = tape.softplus(&h);
    let h = tape.mul(&h, &tape.constant(w.clone())).unwrap();
    let e = tape.exp(&tape.scale(x, 0.3));
    tape.add(&tape.sum(&h), &tape.sum(&e)).unwrap()
}

#[test]
fn log_likelihood_of_a_standard_normal_at_zero() {
    let tape = Tape::<f64>::new();
    let mu = tape.variable(Tensor::zeros(&[1, 1]));
    let sigma = tape.variable(Tensor::ones(&[1, 1]));
    let ll = tape.gaussian_log_likelihood(&Tensor::zeros(&[1, 1]), &mu, &sigma).unwrap();
    assert!((ll.value().item() + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    let g = tape.backward(&ll).unwrap();
    assert_eq!(g.wrt(&mu).unwrap().data(), &[0.0]);
    assert!((g.wrt(&sigma).unwrap().data()[0] + 1.0).abs() < 1e-15);
}

#[test]
fn nonpositive_sigma_is_a_domain_error() {
    let tape = Tape::new();
    let mu = tape.variable(Tensor::zeros(&[1, 2]));
    let sigma = tape.variable(Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap());
    assert!(tape.gaussian_log_likelihood(&Tensor::zeros(&[1, 2]), &mu, &sigma).is_err());
}

#[test]
fn checkpoints_round_trip_bit_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::<f64>::new();
    store.add("w", random(&mut rng, 3, 4)).unwrap();
    store.add("b", random(&mut rng, 1, 4)).unwrap();
    let bytes = Checkpoint::from_store("hdr", &store).to_bytes();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back.to_bytes(), bytes);
    let mut fresh = ParamStore::<f64>::new();
    fresh.add("w", Tensor::zeros(&[3, 4])).unwrap();
    fresh.add("b", Tensor::zeros(&[1, 4])).unwrap();
    back.restore_into(&mut fresh).unwrap();
    for id in store.ids() {
        assert_eq!(store.value(id).data(), fresh.value(id).data());
    }
    let mut truncated = bytes.clone();
    truncated.truncate(bytes.len() - 3);
    assert!(Checkpoint::from_bytes(&truncated).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_gradients_are_transposed_products(seed in any::<u64>(), n in 1usize..5, k in 1usize..5, m in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, w) = (random(&mut rng, n, k), random(&mut rng, k, m), random(&mut rng, n, m));
        let tape = Tape::new();
        let (av, bv) = (tape.variable(a.clone()), tape.variable(b.clone()));
        let p = tape.matmul(&av, &bv).unwrap();
        let loss = tape.sum(&tape.mul(&p, &tape.constant(w.clone())).unwrap());
        let g = tape.backward(&loss).unwrap();
        // dL/dA = W B^T and dL/dB = A^T W
        let ga = w.matmul(&b.transpose().unwrap()).unwrap();
        let gb = a.transpose().unwrap().matmul(&w).unwrap();
        prop_assert!(g.wrt(&av).unwrap().max_abs_diff(&ga) < 1e-12);
        prop_assert!(g.wrt(&bv).unwrap().max_abs_diff(&gb) < 1e-12);
    }

    #[test]
    fn composite_gradients_match_central_differences(seed in any::<u64>(), n in 1usize..4, k in 1usize..4, m in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, a, b, w) = (random(&mut rng, n, k), random(&mut rng, k, m), random(&mut rng, 1, m), random(&mut rng, n, m));
        let tape = Tape::new();
        let (xv, av, bv) = (tape.variable(x.clone()), tape.variable(a.clone()), tape.variable(b.clone()));
        let g = tape.backward(&composite(&tape, &xv, &av, &bv, &w)).unwrap();
        let eval = |x: &Tensor<f64>, a: &Tensor<f64>, b: &Tensor<f64>| {
            let t = Tape::new();
            composite(&t, &t.constant(x.clone()), &t.constant(a.clone()), &t.constant(b.clone()), &w).value().item()
        };
        let nx = central_difference(|p| eval(p, &a, &b), &x, STEP);
        let na = central_difference(|p| eval(&x, p, &b), &a, STEP);
        let nb = central_difference(|p| eval(&x, &a, p), &b, STEP);
        prop_assert!(max_relative_error(g.wrt(&xv).unwrap(), &nx, 1e-6) < 1e-6);
        prop_assert!(max_relative_error(g.wrt(&av).unwrap(), &na, 1e-6) < 1e-6);
        prop_assert!(max_relative_error(g.wrt(&bv).unwrap(), &nb, 1e-6) < 1e-6);
    }

    #[test]
    fn log_likelihood_gradients_are_closed_form(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = random(&mut rng, n, 1);
        let m = random(&mut rng, n, 1);
        let s = random(&mut rng, n, 1).map(|v| v.abs() + 0.1);
        let tape = Tape::new();
        let (mv, sv) = (tape.variable(m.clone()), tape.variable(s.clone()));
        let ll = tape.gaussian_log_likelihood(&y, &mv, &sv).unwrap();
        let g = tape.backward(&ll).unwrap();
        let mut value = 0.0;
        for i in 0..n {
            let (yi, mi, si) = (y.data()[i], m.data()[i], s.data()[i]);
            let r = yi - mi;
            value += -0.5 * (2.0 * std::f64::consts::PI * si * si).ln() - r * r / (2.0 * si * si);
            prop_assert!((g.wrt(&mv).unwrap().data()[i] - r / (si * si)).abs() < 1e-9);
            prop_assert!((g.wrt(&sv).unwrap().data()[i] - (r * r / si.powi(3) - 1.0 / si)).abs() < 1e-9);
        }
        prop_assert!((ll.value().item() - value).abs() < 1e-9 * (1.0 + value.abs()));
    }

    #[test]
    fn adam_first_step_moves_by_the_learning_rate(seed in any::<u64>(), lr in 1e-4..0.1f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let id = store.add("p", random(&mut rng, 2, 3)).unwrap();
        let before = store.value(id).clone();
        let tape = Tape::new();
        let p = tape.param(&store, id);
        let loss = tape.sum(&tape.mul(&p, &tape.constant(random(&mut rng, 2, 3))).unwrap());
        let grads = tape.backward(&loss).unwrap().param_grads(&store);
        store.accumulate(&grads).unwrap();
        let g = store.grad(id).clone();
        let mut state = AdamState::for_store(lr, &store);
        adam_step_store(&mut store, &mut state).unwrap();
        // bias-corrected first step is lr * g / (|g| + eps), i.e. lr * sign(g) up to eps
        for i in 0..6 {
            let step = store.value(id).data()[i] - before.data()[i];
            let gi = g.data()[i];
            if gi.abs() > 1e-3 {
                prop_assert!((step + lr * gi.signum()).abs() < lr * 1e-4);
            }
        }
    }
}
