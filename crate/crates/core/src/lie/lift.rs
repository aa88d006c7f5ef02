use rand::Rng;

use super::element::{pseudo_distance, GroupElement, Point};
use super::tag::GroupTag;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// A point of the input space lifted to the group, plus its orbit coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LiftedPoint<T> {
    pub u: GroupElement<T>,
    /// Orbit coordinate; only `SO2` (radius) carries one.
    pub q: Option<T>,
    pub x_src: Point<T>,
    /// Row of the feature matrix this point carries.
    pub source: usize,
}

/// Basepoint `o` the lift maps onto `x`: `0` for translations and SE(2),
/// `(1, 0)` for the rotation groups.
pub fn origin<T: Real>(tag: GroupTag) -> Point<T> {
    match tag {
        GroupTag::SO2 | GroupTag::RxSO2 => [T::one(), T::zero()],
        _ => [T::zero(), T::zero()],
    }
}

impl<T: Real> LiftedPoint<T> {
    pub fn tag(&self) -> GroupTag {
        self.u.tag()
    }

    /// Point recovered from the lift: `u o`, scaled by the orbit radius for `SO2`.
    pub fn reconstruct(&self) -> Point<T> {
        let p = self.u.act(origin(self.tag()));
        match self.q {
            Some(r) => [p[0] * r, p[1] * r],
            None => p,
        }
    }

    /// The same lifted point moved by `g` (left translation of `u`; the orbit
    /// coordinate is preserved by every supported action).
    pub fn transformed(&self, g: &GroupElement<T>) -> Result<Self> {
        Ok(Self {
            u: g.compose(&self.u)?,
            q: self.q,
            x_src: g.act(self.x_src),
            source: self.source,
        })
    }
}

/// Lifts `x` to `k_lift` group elements `u` with `u o = x`.
///
/// The lift is unique for `T1`, `T2`, `SO2` and `RxSO2`, so those always yield
/// one element. `SE2` has an `SO(2)` stabiliser and draws `k_lift` rotation
/// angles uniformly.
pub fn lift<T: Real, R: Rng + ?Sized>(
    x: Point<T>,
    tag: GroupTag,
    k_lift: usize,
    source: usize,
    rng: &mut R,
) -> Result<Vec<LiftedPoint<T>>> {
    if k_lift == 0 {
        return Err(Error::Contract("k_lift must be at least 1".into()));
    }
    let single = |u: GroupElement<T>, q: Option<T>| {
        Ok(vec![LiftedPoint {
            u,
            q,
            x_src: x,
            source,
        }])
    };
    match tag {
        GroupTag::T1 => single(GroupElement::T1 { t: x[0] }, None),
        GroupTag::T2 => single(GroupElement::T2 { t: x }, None),
        GroupTag::SO2 => {
            let r = x[0].hypot(x[1]);
            single(GroupElement::rotation(x[1].atan2(x[0])), Some(r))
        }
        GroupTag::RxSO2 => {
            let r = x[0].hypot(x[1]);
            if !(r > T::zero()) {
                return Err(Error::DegenerateInput(
                    "the scale-rotation group cannot lift the origin".into(),
                ));
            }
            single(GroupElement::scale_rotation(r.ln(), x[1].atan2(x[0])), None)
        }
        GroupTag::SE2 => Ok((0..k_lift)
            .map(|_| {
                let pi = std::f64::consts::PI;
                let theta = T::lit(rng.random_range(-pi..pi));
                LiftedPoint {
                    u: GroupElement::rigid(theta, x),
                    q: None,
                    x_src: x,
                    source,
                }
            })
            .collect()),
    }
}

/// Lifts a whole point cloud; point `i` carries feature row `i`.
pub fn lift_all<T: Real, R: Rng + ?Sized>(
    xs: &[Point<T>],
    tag: GroupTag,
    k_lift: usize,
    rng: &mut R,
) -> Result<Vec<LiftedPoint<T>>> {
    let mut out = Vec::with_capacity(xs.len() * if tag == GroupTag::SE2 { k_lift } else { 1 });
    for (i, &x) in xs.iter().enumerate() {
        out.extend(lift(x, tag, k_lift, i, rng)?);
    }
    Ok(out)
}

/// Distance between orbit coordinates: `|q_i - q_j|` for radius orbits, else 0.
pub fn orbit_distance<T: Real>(qi: Option<T>, qj: Option<T>) -> T {
    match (qi, qj) {
        (Some(a), Some(b)) => (a - b).abs(),
        _ => T::zero(),
    }
}

/// `sqrt(d(u_i, u_j)^2 + alpha d_O(q_i, q_j)^2)`.
pub fn total_distance<T: Real>(
    pi: &LiftedPoint<T>,
    pj: &LiftedPoint<T>,
    alpha: T,
) -> Result<T> {
    let d = pseudo_distance(&pi.u, &pj.u)?;
    let o = orbit_distance(pi.q, pj.q);
    Ok((d * d + alpha * o * o).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn lift_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = lift([0.0, 0.0], GroupTag::T2, 4, 0, &mut rng).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].u, GroupElement::identity(GroupTag::T2));

        let p = lift([0.0f64, 2.0], GroupTag::SO2, 1, 0, &mut rng).unwrap();
        match p[0].u {
            GroupElement::SO2 { theta } => assert!((theta - PI / 2.0).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        assert_eq!(p[0].q, Some(2.0));

        let p = lift([1.0f64, 1.0], GroupTag::SE2, 3, 0, &mut rng).unwrap();
        assert_eq!(p.len(), 3);
        for lp in &p {
            let y = lp.u.act([0.0, 0.0]);
            assert!((y[0] - 1.0).abs() < 1e-15 && (y[1] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rxso2_rejects_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            lift([0.0, 0.0], GroupTag::RxSO2, 1, 0, &mut rng),
            Err(Error::DegenerateInput(_))
        ));
        assert!(lift([0.0f64, 0.0], GroupTag::T1, 0, 0, &mut rng).is_err());
    }

    #[test]
    fn lift_reconstructs_source() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for tag in GroupTag::ALL {
            for _ in 0..500 {
                let x: [f64; 2] = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
                let x = if tag == GroupTag::T1 { [x[0], 0.0] } else { x };
                for lp in lift(x, tag, 3, 0, &mut rng).unwrap() {
                    let y = lp.reconstruct();
                    assert!((y[0] - x[0]).abs() < 1e-9 && (y[1] - x[1]).abs() < 1e-9, "{tag}");
                }
            }
        }
    }

    #[test]
    fn distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = lift([1.0f64, 0.0], GroupTag::SO2, 1, 0, &mut rng).unwrap()[0];
        let b = lift([3.0, 0.0], GroupTag::SO2, 1, 1, &mut rng).unwrap()[0];
        assert_eq!(total_distance(&a, &a, 1.0).unwrap(), 0.0);
        assert!((total_distance(&a, &b, 1.0).unwrap() - 2.0).abs() < 1e-15);
        let c = lift([0.0f64, 2.0], GroupTag::SO2, 1, 2, &mut rng).unwrap()[0];
        let d0 = pseudo_distance(&a.u, &c.u).unwrap();
        assert_eq!(total_distance(&a, &c, 0.0).unwrap(), d0);
        assert_eq!(orbit_distance::<f64>(None, None), 0.0);
    }

    #[test]
    fn orbit_distance_is_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let y = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let g = GroupElement::<f64>::random(GroupTag::SO2, 1.0, &mut rng);
            let a = lift(x, GroupTag::SO2, 1, 0, &mut rng).unwrap()[0];
            let b = lift(y, GroupTag::SO2, 1, 1, &mut rng).unwrap()[0];
            let a2 = lift(g.act(x), GroupTag::SO2, 1, 0, &mut rng).unwrap()[0];
            let b2 = lift(g.act(y), GroupTag::SO2, 1, 1, &mut rng).unwrap()[0];
            let d = total_distance(&a, &b, 1.0).unwrap();
            let d2 = total_distance(&a2, &b2, 1.0).unwrap();
            assert!((d - d2).abs() < 1e-9);
        }
    }
}
