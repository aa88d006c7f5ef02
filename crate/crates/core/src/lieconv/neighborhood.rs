//! Radius calibration, neighbourhood queries and Monte Carlo subsampling.

use std::hash::{Hash, Hasher};
use std::rc::Rc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Segments, Tensor};
use crate::error::{Error, Result};
use crate::lie::{total_distance, GroupElement, GroupTag, LiftedPoint};
use crate::scalar::Real;

/// Pair-distance samples used for calibration are capped at this many.
pub const MAX_CALIBRATION_PAIRS: usize = 1_000_000;

fn ordered_pair_distances<T: Real>(points: &[LiftedPoint<T>], alpha: T) -> Result<Vec<T>> {
    let n = points.len();
    let total = n * n;
    if total <= MAX_CALIBRATION_PAIRS {
        let mut out = Vec::with_capacity(total);
        for a in points {
            for b in points {
                out.push(total_distance(a, b, alpha)?);
            }
        }
        Ok(out)
    } else {
        // Deterministic in the point count so calibration is a pure function of the cloud.
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ n as u64);
        (0..MAX_CALIBRATION_PAIRS)
            .map(|_| {
                let i = rng.random_range(0..n);
                let j = rng.random_range(0..n);
                total_distance(&points[i], &points[j], alpha)
            })
            .collect()
    }
}

/// Radius `r` such that on average `fraction * N` points fall strictly within `r`.
///
/// `r` sits between the `fraction` quantile of all ordered pair distances
/// (self pairs included) and the next larger distance, so tied distances fall
/// on the same side.
pub fn calibrate_radius<T: Real>(points: &[LiftedPoint<T>], fraction: T, alpha: T) -> Result<T> {
    if points.len() < 2 {
        return Err(Error::Contract(
            "radius calibration needs at least two points".into(),
        ));
    }
    if !(fraction > T::zero() && fraction <= T::one()) {
        return Err(Error::Contract(format!(
            "neighbourhood fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let mut d = ordered_pair_distances(points, alpha)?;
    d.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let m = d.len();
    let max = d[m - 1];
    if !(max > T::zero()) {
        return Err(Error::DegenerateInput(
            "all points coincide, radius would be zero".into(),
        ));
    }
    let k = (fraction * T::from_usize_lossy(m))
        .round()
        .to_usize()
        .unwrap_or(m)
        .clamp(1, m);
    // Each distance occurs for (i, j) and (j, i), so the next order statistic
    // is often the same value. Bisect towards the next larger distance instead,
    // otherwise membership of the tied pair is decided by rounding.
    let lo = d[k - 1];
    let tie = lo * T::lit(1e-9) + T::lit(1e-12);
    let next = d[k..].iter().copied().find(|&v| v > lo + tie);
    let r = match next {
        Some(hi) => (lo + hi) * T::lit(0.5),
        None => max * T::lit(1.0 + 1e-9),
    };
    if r > T::zero() {
        Ok(r)
    } else {
        // Many coincident points: smallest positive separation keeps duplicates together.
        Ok(d.iter().copied().find(|&v| v > T::zero()).unwrap_or(max))
    }
}

/// Indices `j` with `total_distance(center, points[j]) < radius`.
pub fn neighborhood<T: Real>(
    center: &LiftedPoint<T>,
    points: &[LiftedPoint<T>],
    radius: T,
    alpha: T,
) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (j, p) in points.iter().enumerate() {
        if total_distance(center, p, alpha)? < radius {
            out.push(j);
        }
    }
    Ok(out)
}

/// All of `indices` when there are at most `n_mc`, else `n_mc` of them drawn
/// uniformly without replacement (returned in ascending order).
pub fn mc_subsample<R: Rng + ?Sized>(indices: &[usize], n_mc: usize, rng: &mut R) -> Vec<usize> {
    let n_mc = n_mc.max(1);
    if indices.len() <= n_mc {
        return indices.to_vec();
    }
    let mut picked: Vec<usize> = sample(rng, indices.len(), n_mc).into_iter().collect();
    picked.sort_unstable();
    picked.into_iter().map(|i| indices[i]).collect()
}

/// A coordinate that is Lipschitz in the total distance:
/// `|key(a) - key(b)| <= slope * d(a, b)`. Lets neighbour search skip
/// candidates whose keys are too far apart.
fn sweep_key<T: Real>(p: &LiftedPoint<T>, alpha: T) -> Option<(T, T)> {
    match p.u {
        GroupElement::T1 { t } => Some((t, T::one())),
        // |V^{-1} t| >= |t| for SE(2), so the x translation works for both.
        GroupElement::T2 { t } | GroupElement::SE2 { t, .. } => Some((t[0], T::one())),
        GroupElement::RxSO2 { log_s, .. } => Some((log_s, T::one() / T::lit(2.0).sqrt())),
        GroupElement::SO2 { .. } if alpha > T::zero() => {
            p.q.map(|q| (q, T::one() / alpha.sqrt()))
        }
        GroupElement::SO2 { .. } => None,
    }
}

/// Full (not subsampled) neighbourhoods of every center among `sources`, as CSR.
pub fn all_neighborhoods<T: Real>(
    centers: &[LiftedPoint<T>],
    sources: &[LiftedPoint<T>],
    radius: T,
    alpha: T,
) -> Result<Segments> {
    let keyed: Option<Vec<(T, usize)>> = sources
        .iter()
        .enumerate()
        .map(|(j, p)| sweep_key(p, alpha).map(|(k, _)| (k, j)))
        .collect();
    let mut offsets = Vec::with_capacity(centers.len() + 1);
    offsets.push(0);
    let mut src = Vec::new();
    match keyed {
        Some(mut keyed) => {
            keyed.sort_by(|a, b| a.partial_cmp(b).expect("finite keys"));
            let mut hits = Vec::new();
            for c in centers {
                let (key, slope) = sweep_key(c, alpha).expect("same tag as sources");
                let reach = slope * radius;
                let lo = keyed.partition_point(|&(k, _)| k < key - reach);
                let hi = keyed.partition_point(|&(k, _)| k <= key + reach);
                hits.clear();
                for &(_, j) in &keyed[lo..hi] {
                    if total_distance(c, &sources[j], alpha)? < radius {
                        hits.push(j);
                    }
                }
                hits.sort_unstable();
                src.extend_from_slice(&hits);
                offsets.push(src.len());
            }
        }
        None => {
            for c in centers {
                src.extend(neighborhood(c, sources, radius, alpha)?);
                offsets.push(src.len());
            }
        }
    }
    Ok(Segments { offsets, src })
}

/// `Concat(log(v_j^{-1} u_i), q_i, q_j)`.
pub fn pair_embedding<T: Real>(center: &LiftedPoint<T>, source: &LiftedPoint<T>) -> Result<Vec<T>> {
    let rel = source.u.between(&center.u)?;
    let mut a = rel.log().coords().to_vec();
    if let (Some(qi), Some(qj)) = (center.q, source.q) {
        a.push(qi);
        a.push(qj);
    }
    Ok(a)
}

/// Everything a convolution needs about one (centers, sources) configuration:
/// the selected pairs (CSR over centers, indices into the source list) and
/// their embeddings.
#[derive(Clone, Debug)]
pub struct PairGeometry<T: Real> {
    pub tag: GroupTag,
    pub radius: T,
    pub segments: Rc<Segments>,
    /// `P x embedding_dim`.
    pub embeddings: Tensor<T>,
    /// Feature row of every source point.
    pub source_rows: Vec<usize>,
    pub num_centers: usize,
}

impl<T: Real> PairGeometry<T> {
    /// Subsamples full neighbourhoods (when `n_mc` is set) and embeds the pairs.
    ///
    /// The returned segments index feature rows directly (`source_rows` already
    /// applied), so the geometry can be fed straight to the pair kernels.
    pub fn build<R: Rng + ?Sized>(
        centers: &[LiftedPoint<T>],
        sources: &[LiftedPoint<T>],
        full: &Segments,
        radius: T,
        n_mc: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        let tag = centers
            .first()
            .or(sources.first())
            .map(|p| p.tag())
            .ok_or_else(|| Error::Contract("empty point cloud".into()))?;
        let emb_dim = tag.embedding_dim();
        let mut offsets = Vec::with_capacity(centers.len() + 1);
        offsets.push(0);
        let mut src = Vec::new();
        let mut emb = Vec::new();
        for (i, c) in centers.iter().enumerate() {
            let nb = &full.src[full.range(i)];
            let chosen = match n_mc {
                Some(n) => mc_subsample(nb, n, rng),
                None => nb.to_vec(),
            };
            for j in chosen {
                let s = &sources[j];
                emb.extend(pair_embedding(c, s)?);
                src.push(s.source);
            }
            offsets.push(src.len());
        }
        let p = src.len();
        Ok(Self {
            tag,
            radius,
            segments: Rc::new(Segments { offsets, src }),
            embeddings: Tensor::new_allow_empty(vec![p, emb_dim], emb)?,
            source_rows: sources.iter().map(|s| s.source).collect(),
            num_centers: centers.len(),
        })
    }

    pub fn num_pairs(&self) -> usize {
        self.segments.num_pairs()
    }

    /// Mean neighbourhood size after subsampling.
    pub fn mean_neighbors(&self) -> f64 {
        self.num_pairs() as f64 / self.num_centers.max(1) as f64
    }
}

/// Stable fingerprint of a lifted point cloud (bit patterns of every coordinate).
pub fn fingerprint<T: Real>(points: &[LiftedPoint<T>], extra: &[f64]) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    points.len().hash(&mut h);
    for p in points {
        p.tag().hash(&mut h);
        for v in p.u.params() {
            v.as_f64().to_bits().hash(&mut h);
        }
        p.q.map(|q| q.as_f64().to_bits()).hash(&mut h);
        p.source.hash(&mut h);
    }
    for e in extra {
        e.to_bits().hash(&mut h);
    }
    h.finish()
}
