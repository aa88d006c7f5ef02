//! Functional embedding of a context set.

use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{dim_err, Error, Result};
use crate::lie::Point;
use crate::lieconv::{LieConvLayer, PairGeometry};

/// `[1, y, y^2, ..., y^K]` for every output dimension, concatenated.
pub fn phi_embed(y: &[f64], k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(y.len() * (k + 1));
    for &v in y {
        let mut p = 1.0;
        for _ in 0..=k {
            out.push(p);
            p *= v;
        }
    }
    out
}

fn sq_dist(a: Point<f64>, b: Point<f64>) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// `scale * exp(-|x - x'|^2 / (2 bandwidth^2))`.
pub fn rbf_psi(x: Point<f64>, x2: Point<f64>, bandwidth: f64, scale: f64) -> f64 {
    scale * (-sq_dist(x, x2) / (2.0 * bandwidth * bandwidth)).exp()
}

/// Uniform lattice over `[lower - margin, upper + margin]` per dimension with
/// `ceil(gamma * extent) + 1` points each; points are listed with the last
/// dimension varying fastest.
pub fn make_grid(lower: &[f64], upper: &[f64], gamma: f64, margin: f64) -> Result<Vec<Vec<f64>>> {
    if lower.len() != upper.len() || lower.is_empty() {
        return Err(dim_err!("grid bounds of lengths {} and {}", lower.len(), upper.len()));
    }
    if !(gamma > 0.0) || !(margin >= 0.0) {
        return Err(Error::Contract(format!(
            "grid density must be positive and margin nonnegative, got {gamma} and {margin}"
        )));
    }
    let mut axes = Vec::with_capacity(lower.len());
    for (&lo, &hi) in lower.iter().zip(upper) {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Contract(format!("grid bounds [{lo}, {hi}] are not ordered")));
        }
        let (lo, hi) = (lo - margin, hi + margin);
        let extent = hi - lo;
        let n = (gamma * extent - 1e-9).ceil().max(0.0) as usize + 1;
        let step = if n > 1 { extent / (n - 1) as f64 } else { 0.0 };
        axes.push((0..n).map(|k| lo + step * k as f64).collect::<Vec<_>>());
    }
    let mut points = vec![Vec::new()];
    for axis in &axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    Ok(points)
}

/// Learnable RBF kernel, stored as logs.
#[derive(Clone, Copy, Debug)]
pub struct RbfPsi {
    pub log_bandwidth: ParamId,
    pub log_scale: ParamId,
}

impl RbfPsi {
    pub fn new(store: &mut ParamStore<f64>, prefix: &str, bandwidth: f64) -> Result<Self> {
        Ok(Self {
            log_bandwidth: store.add(
                format!("{prefix}.log_bandwidth"),
                Tensor::new(vec![1], vec![bandwidth.ln()])?,
            )?,
            log_scale: store.add(format!("{prefix}.log_scale"), Tensor::zeros(&[1]))?,
        })
    }

    pub fn bandwidth(&self, store: &ParamStore<f64>) -> f64 {
        store.value(self.log_bandwidth).item().exp()
    }

    pub fn scale(&self, store: &ParamStore<f64>) -> f64 {
        store.value(self.log_scale).item().exp()
    }

    /// `psi(rows[a], cols[b])` as a differentiable `|rows| x |cols|` matrix.
    pub fn matrix(
        &self,
        tape: &Tape<f64>,
        store: &ParamStore<f64>,
        rows: &[Point<f64>],
        cols: &[Point<f64>],
    ) -> Result<Var<f64>> {
        let d2: Vec<f64> = rows
            .iter()
            .flat_map(|&p| cols.iter().map(move |&x| sq_dist(p, x)))
            .collect();
        let d2 = tape.constant(Tensor::new(vec![rows.len(), cols.len()], d2)?);
        let log_bw = tape.param(store, self.log_bandwidth);
        let inv_bw2 = tape.exp(&tape.scale(&log_bw, -2.0));
        let arg = tape.scale(&tape.mul_scalar(&d2, &inv_bw2)?, -0.5);
        let scale = tape.exp(&tape.param(store, self.log_scale));
        tape.mul_scalar(&tape.exp(&arg), &scale)
    }

    /// `h(e) = sum_i phi(y_i) psi(e, x_i)` at every eval point, differentiable
    /// in both kernel parameters. An empty context gives zeros.
    pub fn encode(
        &self,
        tape: &Tape<f64>,
        store: &ParamStore<f64>,
        context_x: &[Point<f64>],
        context_y: &[f64],
        y_dim: usize,
        multiplicity: usize,
        eval_points: &[Point<f64>],
    ) -> Result<Var<f64>> {
        if eval_points.is_empty() {
            return Err(Error::Contract("encoder needs at least one eval point".into()));
        }
        if context_y.len() != context_x.len() * y_dim {
            return Err(dim_err!(
                "{} context outputs for {} points",
                context_y.len(),
                context_x.len()
            ));
        }
        let width = y_dim * (multiplicity + 1);
        let e = eval_points.len();
        let n = context_x.len();
        if n == 0 {
            return Ok(tape.constant(Tensor::zeros(&[e, width])));
        }
        let phi: Vec<f64> = context_y
            .chunks(y_dim)
            .flat_map(|y| phi_embed(y, multiplicity))
            .collect();
        let phi = tape.constant(Tensor::new(vec![n, width], phi)?);
        let psi = self.matrix(tape, store, eval_points, context_x)?;
        tape.matmul(&psi, &phi)
    }
}

/// `Conv([M, I * M])` on the pixel lattice: the same convolution applied to
/// the density block and to the masked signal, outputs concatenated.
///
/// `image` is `C x H x W` (channel-major), `mask` is `H x W`; pixel `p` of the
/// lattice is feature row `p`.
pub fn encode_image(
    tape: &Tape<f64>,
    store: &ParamStore<f64>,
    conv: &LieConvLayer,
    geom: &PairGeometry<f64>,
    image: &[f64],
    mask: &[f64],
    channels: usize,
) -> Result<Var<f64>> {
    let n = mask.len();
    if image.len() != channels * n {
        return Err(dim_err!(
            "image has {} values, expected {channels} x {n}",
            image.len()
        ));
    }
    if conv.spec.c_in != channels {
        return Err(dim_err!(
            "encoder convolution takes {} channels, image has {channels}",
            conv.spec.c_in
        ));
    }
    if mask.iter().any(|&m| m != 0.0 && m != 1.0) {
        return Err(Error::Contract("mask must be binary".into()));
    }
    let mut density = Vec::with_capacity(n * channels);
    let mut signal = Vec::with_capacity(n * channels);
    for p in 0..n {
        for c in 0..channels {
            density.push(mask[p]);
            signal.push(image[c * n + p] * mask[p]);
        }
    }
    let density = tape.constant(Tensor::new(vec![n, channels], density)?);
    let signal = tape.constant(Tensor::new(vec![n, channels], signal)?);
    let out = conv.forward_many(tape, store, geom, &[&density, &signal])?;
    tape.concat_cols(&[&out[0], &out[1]])
}
