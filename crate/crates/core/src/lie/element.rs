//! Group elements in canonical coordinates with closed-form log/exp.
//!
//! Angles are always stored on the principal branch `(-pi, pi]`. Points of
//! the acted-on space are `[T; 2]`; for `T1` only the first component is used
//! and the second stays zero.

use rand::Rng;

use super::tag::GroupTag;
use crate::error::{Error, Result};
use crate::scalar::{wrap_angle, Real};

pub type Point<T> = [T; 2];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GroupElement<T> {
    T1 { t: T },
    T2 { t: [T; 2] },
    SO2 { theta: T },
    RxSO2 { log_s: T, theta: T },
    SE2 { theta: T, t: [T; 2] },
}

/// Coordinates of a Lie-algebra element in the fixed basis of its group.
///
/// Bases: `T1: t`; `T2: (t_x, t_y)`; `SO2: theta`; `RxSO2: (log s, theta)`;
/// `SE2: (theta, v_x, v_y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlgebraVector<T> {
    tag: GroupTag,
    coords: [T; 3],
}

fn rot<T: Real>(theta: T, p: Point<T>) -> Point<T> {
    let (s, c) = theta.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

/// `sin(theta)/theta` and `(1 - cos(theta))/theta`, the entries of the SE(2)
/// left Jacobian, with series expansions near zero.
fn se2_v_coeffs<T: Real>(theta: T) -> (T, T) {
    if theta.abs() < T::lit(1e-4) {
        let t2 = theta * theta;
        (
            T::one() - t2 / T::lit(6.0) + t2 * t2 / T::lit(120.0),
            theta / T::lit(2.0) - theta * t2 / T::lit(24.0),
        )
    } else {
        let (s, c) = theta.sin_cos();
        (s / theta, (T::one() - c) / theta)
    }
}

fn tag_mismatch(a: GroupTag, b: GroupTag) -> Error {
    Error::Contract(format!("group tags differ: {a} vs {b}"))
}

impl<T: Real> AlgebraVector<T> {
    pub fn new(tag: GroupTag, coords: &[T]) -> Result<Self> {
        if coords.len() != tag.algebra_dim() {
            return Err(Error::Dimension(format!(
                "{tag} algebra has dimension {}, got {}",
                tag.algebra_dim(),
                coords.len()
            )));
        }
        let mut c = [T::zero(); 3];
        c[..coords.len()].copy_from_slice(coords);
        Ok(Self { tag, coords: c })
    }

    pub fn zero(tag: GroupTag) -> Self {
        Self {
            tag,
            coords: [T::zero(); 3],
        }
    }

    pub fn tag(&self) -> GroupTag {
        self.tag
    }

    pub fn coords(&self) -> &[T] {
        &self.coords[..self.tag.algebra_dim()]
    }

    /// The algebra element as a matrix (`n x n`, row-major in a 3x3 buffer).
    pub fn hat(&self) -> [[T; 3]; 3] {
        let z = T::zero();
        let c = self.coords;
        match self.tag {
            GroupTag::T1 => [[z, c[0], z], [z, z, z], [z, z, z]],
            GroupTag::T2 => [[z, z, c[0]], [z, z, c[1]], [z, z, z]],
            GroupTag::SO2 => [[z, -c[0], z], [c[0], z, z], [z, z, z]],
            GroupTag::RxSO2 => [[c[0], -c[1], z], [c[1], c[0], z], [z, z, z]],
            GroupTag::SE2 => [[z, -c[0], c[1]], [c[0], z, c[2]], [z, z, z]],
        }
    }

    /// Frobenius norm of [`AlgebraVector::hat`].
    pub fn frobenius_norm(&self) -> T {
        self.hat()
            .iter()
            .flatten()
            .map(|&v| v * v)
            .sum::<T>()
            .sqrt()
    }
}

impl<T: Real> GroupElement<T> {
    pub fn identity(tag: GroupTag) -> Self {
        let z = T::zero();
        match tag {
            GroupTag::T1 => Self::T1 { t: z },
            GroupTag::T2 => Self::T2 { t: [z, z] },
            GroupTag::SO2 => Self::SO2 { theta: z },
            GroupTag::RxSO2 => Self::RxSO2 { log_s: z, theta: z },
            GroupTag::SE2 => Self::SE2 { theta: z, t: [z, z] },
        }
    }

    /// Canonicalising constructors keep angles on the principal branch.
    pub fn rotation(theta: T) -> Self {
        Self::SO2 {
            theta: wrap_angle(theta),
        }
    }

    pub fn scale_rotation(log_s: T, theta: T) -> Self {
        Self::RxSO2 {
            log_s,
            theta: wrap_angle(theta),
        }
    }

    pub fn rigid(theta: T, t: [T; 2]) -> Self {
        Self::SE2 {
            theta: wrap_angle(theta),
            t,
        }
    }

    pub fn tag(&self) -> GroupTag {
        match self {
            Self::T1 { .. } => GroupTag::T1,
            Self::T2 { .. } => GroupTag::T2,
            Self::SO2 { .. } => GroupTag::SO2,
            Self::RxSO2 { .. } => GroupTag::RxSO2,
            Self::SE2 { .. } => GroupTag::SE2,
        }
    }

    /// Canonical coordinates in the order listed on [`GroupElement`].
    pub fn params(&self) -> Vec<T> {
        match *self {
            Self::T1 { t } => vec![t],
            Self::T2 { t } => t.to_vec(),
            Self::SO2 { theta } => vec![theta],
            Self::RxSO2 { log_s, theta } => vec![log_s, theta],
            Self::SE2 { theta, t } => vec![theta, t[0], t[1]],
        }
    }

    /// Matrix representation: homogeneous for translations and SE(2), linear
    /// 2x2 for the rotation groups.
    pub fn matrix(&self) -> Vec<Vec<T>> {
        let (o, z) = (T::one(), T::zero());
        match *self {
            Self::T1 { t } => vec![vec![o, t], vec![z, o]],
            Self::T2 { t } => vec![vec![o, z, t[0]], vec![z, o, t[1]], vec![z, z, o]],
            Self::SO2 { theta } => {
                let (s, c) = theta.sin_cos();
                vec![vec![c, -s], vec![s, c]]
            }
            Self::RxSO2 { log_s, theta } => {
                let (s, c) = theta.sin_cos();
                let k = log_s.exp();
                vec![vec![k * c, -k * s], vec![k * s, k * c]]
            }
            Self::SE2 { theta, t } => {
                let (s, c) = theta.sin_cos();
                vec![vec![c, -s, t[0]], vec![s, c, t[1]], vec![z, z, o]]
            }
        }
    }

    pub fn compose(&self, other: &Self) -> Result<Self> {
        Ok(match (*self, *other) {
            (Self::T1 { t: a }, Self::T1 { t: b }) => Self::T1 { t: a + b },
            (Self::T2 { t: a }, Self::T2 { t: b }) => Self::T2 {
                t: [a[0] + b[0], a[1] + b[1]],
            },
            (Self::SO2 { theta: a }, Self::SO2 { theta: b }) => Self::rotation(a + b),
            (Self::RxSO2 { log_s: la, theta: a }, Self::RxSO2 { log_s: lb, theta: b }) => {
                Self::scale_rotation(la + lb, a + b)
            }
            (Self::SE2 { theta: a, t: ta }, Self::SE2 { theta: b, t: tb }) => {
                let r = rot(a, tb);
                Self::rigid(a + b, [ta[0] + r[0], ta[1] + r[1]])
            }
            (a, b) => return Err(tag_mismatch(a.tag(), b.tag())),
        })
    }

    pub fn inverse(&self) -> Self {
        match *self {
            Self::T1 { t } => Self::T1 { t: -t },
            Self::T2 { t } => Self::T2 { t: [-t[0], -t[1]] },
            Self::SO2 { theta } => Self::rotation(-theta),
            Self::RxSO2 { log_s, theta } => Self::scale_rotation(-log_s, -theta),
            Self::SE2 { theta, t } => {
                let r = rot(-theta, t);
                Self::rigid(-theta, [-r[0], -r[1]])
            }
        }
    }

    /// `self^{-1} other`.
    pub fn between(&self, other: &Self) -> Result<Self> {
        self.inverse().compose(other)
    }

    pub fn log(&self) -> AlgebraVector<T> {
        let z = T::zero();
        let (tag, coords) = match *self {
            Self::T1 { t } => (GroupTag::T1, [t, z, z]),
            Self::T2 { t } => (GroupTag::T2, [t[0], t[1], z]),
            Self::SO2 { theta } => (GroupTag::SO2, [theta, z, z]),
            Self::RxSO2 { log_s, theta } => (GroupTag::RxSO2, [log_s, theta, z]),
            Self::SE2 { theta, t } => {
                // V(theta) = [[a, -b], [b, a]]; its inverse is [[a, b], [-b, a]] / (a^2 + b^2).
                let (a, b) = se2_v_coeffs(theta);
                let det = a * a + b * b;
                let vx = (a * t[0] + b * t[1]) / det;
                let vy = (-b * t[0] + a * t[1]) / det;
                (GroupTag::SE2, [theta, vx, vy])
            }
        };
        AlgebraVector { tag, coords }
    }

    pub fn exp(v: &AlgebraVector<T>) -> Self {
        let c = v.coords;
        match v.tag {
            GroupTag::T1 => Self::T1 { t: c[0] },
            GroupTag::T2 => Self::T2 { t: [c[0], c[1]] },
            GroupTag::SO2 => Self::rotation(c[0]),
            GroupTag::RxSO2 => Self::scale_rotation(c[0], c[1]),
            GroupTag::SE2 => {
                let (a, b) = se2_v_coeffs(c[0]);
                let t = [a * c[1] - b * c[2], b * c[1] + a * c[2]];
                Self::rigid(c[0], t)
            }
        }
    }

    /// Action on a point of the plane (or the line for `T1`).
    pub fn act(&self, x: Point<T>) -> Point<T> {
        match *self {
            Self::T1 { t } => [x[0] + t, x[1]],
            Self::T2 { t } => [x[0] + t[0], x[1] + t[1]],
            Self::SO2 { theta } => rot(theta, x),
            Self::RxSO2 { log_s, theta } => {
                let r = rot(theta, x);
                let k = log_s.exp();
                [k * r[0], k * r[1]]
            }
            Self::SE2 { theta, t } => {
                let r = rot(theta, x);
                [r[0] + t[0], r[1] + t[1]]
            }
        }
    }

    /// Random element. Translations are drawn from `[-extent, extent]`, angles
    /// uniformly, log-scales from `[-0.7, 0.7]`.
    pub fn random<R: Rng + ?Sized>(tag: GroupTag, extent: f64, rng: &mut R) -> Self {
        let mut u = |lo: f64, hi: f64| T::lit(rng.random_range(lo..hi));
        let pi = std::f64::consts::PI;
        match tag {
            GroupTag::T1 => Self::T1 { t: u(-extent, extent) },
            GroupTag::T2 => Self::T2 {
                t: [u(-extent, extent), u(-extent, extent)],
            },
            GroupTag::SO2 => Self::rotation(u(-pi, pi)),
            GroupTag::RxSO2 => Self::scale_rotation(u(-0.7, 0.7), u(-pi, pi)),
            GroupTag::SE2 => Self::rigid(u(-pi, pi), [u(-extent, extent), u(-extent, extent)]),
        }
    }
}

/// `exp` as a free function on the algebra.
pub fn group_exp<T: Real>(v: &AlgebraVector<T>) -> GroupElement<T> {
    GroupElement::exp(v)
}

pub fn group_log<T: Real>(u: &GroupElement<T>) -> AlgebraVector<T> {
    u.log()
}

/// Left-invariant pseudo-distance `||log(u^{-1} v)||_F`.
pub fn pseudo_distance<T: Real>(u: &GroupElement<T>, v: &GroupElement<T>) -> Result<T> {
    Ok(u.between(v)?.log().frobenius_norm())
}
