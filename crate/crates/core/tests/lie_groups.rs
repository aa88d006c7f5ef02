use std::f64::consts::PI;

use equivcnp::lie::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type G = GroupElement<f64>;

fn element(tag: GroupTag, seed: u64) -> G {
    G::random(tag, 3.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn tag_strategy() -> impl Strategy<Value = GroupTag> {
    prop::sample::select(GroupTag::ALL.to_vec())
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn wrap(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

#[test]
fn translation_distance_is_euclidean() {
    let u = G::T2 { t: [1.0, -2.0] };
    let v = G::T2 { t: [4.0, 2.0] };
    assert!((pseudo_distance(&u, &v).unwrap() - 5.0).abs() < 1e-14);
    let d = pseudo_distance(&G::T1 { t: 0.5 }, &G::T1 { t: -1.0 }).unwrap();
    assert!((d - 1.5).abs() < 1e-14);
}

#[test]
fn so2_lift_of_a_point_on_the_y_axis() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let p = lift([0.0f64, 2.0], GroupTag::SO2, 1, 0, &mut rng).unwrap();
    assert_eq!(p.len(), 1);
    assert_eq!(p[0].q, Some(2.0));
    let expect = G::rotation(PI / 2.0);
    assert!(max_diff(&p[0].u.matrix(), &expect.matrix()) < 1e-15);
}

#[test]
fn se2_lifts_share_the_translation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = lift([0.7f64, -1.1], GroupTag::SE2, 5, 3, &mut rng).unwrap();
    assert_eq!(p.len(), 5);
    for lp in &p {
        assert_eq!(lp.source, 3);
        let y = lp.u.act(origin(GroupTag::SE2));
        assert!((y[0] - 0.7).abs() < 1e-15 && (y[1] + 1.1).abs() < 1e-15);
    }
}

proptest! {
    #[test]
    fn compose_is_matrix_product(tag in tag_strategy(), a in any::<u64>(), b in any::<u64>()) {
        let (u, v) = (element(tag, a), element(tag, b));
        let uv = u.compose(&v).unwrap();
        prop_assert!(max_diff(&uv.matrix(), &matmul(&u.matrix(), &v.matrix())) < 1e-12);
    }

    #[test]
    fn inverse_cancels(tag in tag_strategy(), a in any::<u64>()) {
        let u = element(tag, a);
        let id = G::identity(tag).matrix();
        prop_assert!(max_diff(&u.compose(&u.inverse()).unwrap().matrix(), &id) < 1e-12);
        prop_assert!(max_diff(&u.inverse().compose(&u).unwrap().matrix(), &id) < 1e-12);
    }

    #[test]
    fn exp_inverts_log(tag in tag_strategy(), a in any::<u64>()) {
        let u = element(tag, a);
        let back = group_exp(&group_log(&u));
        prop_assert!(max_diff(&back.matrix(), &u.matrix()) < 1e-10);
    }

    #[test]
    fn distance_is_left_invariant(tag in tag_strategy(), a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        let (u, v, g) = (element(tag, a), element(tag, b), element(tag, c));
        let d = pseudo_distance(&u, &v).unwrap();
        let dg = pseudo_distance(&g.compose(&u).unwrap(), &g.compose(&v).unwrap()).unwrap();
        prop_assert!((d - dg).abs() < 1e-9 * (1.0 + d), "{} vs {}", d, dg);
    }

    #[test]
    fn distance_is_symmetric_and_zero_on_the_diagonal(tag in tag_strategy(), a in any::<u64>(), b in any::<u64>()) {
        let (u, v) = (element(tag, a), element(tag, b));
        prop_assert!(pseudo_distance(&u, &u).unwrap().abs() < 1e-12);
        let d = pseudo_distance(&u, &v).unwrap();
        prop_assert!((d - pseudo_distance(&v, &u).unwrap()).abs() < 1e-9 * (1.0 + d));
    }

    #[test]
    fn so2_distance_is_root_two_times_the_angle(a in -PI..PI, b in -PI..PI) {
        let d = pseudo_distance(&G::rotation(a), &G::rotation(b)).unwrap();
        prop_assert!((d - 2f64.sqrt() * wrap(b - a).abs()).abs() < 1e-12);
    }

    #[test]
    fn action_is_matrix_action(tag in tag_strategy(), a in any::<u64>(), x0 in -3.0..3.0f64, x1 in -3.0..3.0f64) {
        let u = element(tag, a);
        let x = if tag == GroupTag::T1 { [x0, 0.0] } else { [x0, x1] };
        let m = u.matrix();
        let y = u.act(x);
        let expect = match m.len() {
            2 if tag == GroupTag::T1 => [m[0][0] * x[0] + m[0][1], 0.0],
            2 => [m[0][0] * x[0] + m[0][1] * x[1], m[1][0] * x[0] + m[1][1] * x[1]],
            _ => [
                m[0][0] * x[0] + m[0][1] * x[1] + m[0][2],
                m[1][0] * x[0] + m[1][1] * x[1] + m[1][2],
            ],
        };
        prop_assert!((y[0] - expect[0]).abs() < 1e-12 && (y[1] - expect[1]).abs() < 1e-12);
    }

    #[test]
    fn lifts_map_the_origin_to_the_point(tag in tag_strategy(), seed in any::<u64>(), x0 in -3.0..3.0f64, x1 in -3.0..3.0f64) {
        let x = if tag == GroupTag::T1 { [x0, 0.0] } else { [x0, x1] };
        prop_assume!(x0.hypot(x1) > 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for lp in lift(x, tag, 3, 0, &mut rng).unwrap() {
            let y = lp.reconstruct();
            prop_assert!((y[0] - x[0]).abs() < 1e-9 && (y[1] - x[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn total_distance_is_invariant_under_rotations(seed in any::<u64>(), alpha in 0.0..4.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = G::random(GroupTag::SO2, 1.0, &mut rng);
        let xs = [[1.2, -0.3], [-0.4, 2.1]];
        let lifted = |pts: [[f64; 2]; 2], rng: &mut ChaCha8Rng| lift_all(&pts, GroupTag::SO2, 1, rng).unwrap();
        let a = lifted(xs, &mut rng);
        let b = lifted([g.act(xs[0]), g.act(xs[1])], &mut rng);
        let d = total_distance(&a[0], &a[1], alpha).unwrap();
        let dg = total_distance(&b[0], &b[1], alpha).unwrap();
        prop_assert!((d - dg).abs() < 1e-9);
        let plain = pseudo_distance(&a[0].u, &a[1].u).unwrap();
        let dq = (a[0].q.unwrap() - a[1].q.unwrap()).abs();
        prop_assert!((d - (plain * plain + alpha * dq * dq).sqrt()).abs() < 1e-12);
    }
}
