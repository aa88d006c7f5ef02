//! Differentiable operations recorded on a [`Tape`].
//!
//! Matrices are rank-2 row-major tensors. Besides the usual dense ops this
//! file holds the fused segment kernels the convolution layers are built on:
//! a pair list is stored CSR-style, pairs of center `i` occupy
//! `offsets[i]..offsets[i + 1]` and `src[p]` is the source row of pair `p`.

use std::rc::Rc;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{dim_err, Error, Result};
use crate::scalar::Real;

/// CSR pair list shared between a forward op and its backward closure.
#[derive(Clone, Debug)]
pub struct Segments {
    pub offsets: Vec<usize>,
    pub src: Vec<usize>,
}

impl Segments {
    pub fn num_segments(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn num_pairs(&self) -> usize {
        self.src.len()
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    fn validate(&self, n_src: usize) -> Result<()> {
        if self.offsets.first() != Some(&0) || self.offsets.last() != Some(&self.src.len()) {
            return Err(dim_err!("malformed segment offsets"));
        }
        if self.offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(dim_err!("segment offsets must be nondecreasing"));
        }
        if self.src.iter().any(|&s| s >= n_src) {
            return Err(dim_err!("pair source index out of range"));
        }
        Ok(())
    }
}

fn mat(shape: &[usize]) -> Result<(usize, usize)> {
    match shape {
        [m, n] => Ok((*m, *n)),
        _ => Err(dim_err!("expected a matrix, got shape {shape:?}")),
    }
}

fn same_shape<T: Real>(a: &Var<T>, b: &Var<T>, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(dim_err!("{op}: shapes {:?} and {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new_allow_empty(a.shape().to_vec(), data).expect("same shape")
}

fn gemm_into<T: Real>(
    out: &mut [T],
    (m, k, n): (usize, usize, usize),
    a: (&[T], isize, isize),
    b: (&[T], isize, isize),
) {
    if k == 0 {
        out.iter_mut().for_each(|v| *v = T::zero());
        return;
    }
    T::gemm(
        m,
        k,
        n,
        T::one(),
        a.0,
        a.1,
        a.2,
        b.0,
        b.1,
        b.2,
        T::zero(),
        out,
        n as isize,
        1,
    );
}

/// Numerically stable `ln(1 + e^x)`, never below the smallest positive normal.
pub fn softplus_scalar<T: Real>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p().max(T::min_positive_value())
    }
}

pub fn sigmoid_scalar<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> Tape<T> {
    pub fn add(&self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        same_shape(a, b, "add")?;
        let v = zip_map(a.value(), b.value(), |x, y| x + y);
        Ok(self.record(
            v,
            &[a, b],
            Box::new(|g, _| vec![Some(g.clone()), Some(g.clone())]),
        ))
    }

    pub fn sub(&self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        same_shape(a, b, "sub")?;
        let v = zip_map(a.value(), b.value(), |x, y| x - y);
        Ok(self.record(
            v,
            &[a, b],
            Box::new(|g, _| vec![Some(g.clone()), Some(g.map(|x| -x))]),
        ))
    }

    /// Elementwise product.
    pub fn mul(&self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        same_shape(a, b, "mul")?;
        let v = zip_map(a.value(), b.value(), |x, y| x * y);
        let (av, bv) = (a.value_rc(), b.value_rc());
        Ok(self.record(
            v,
            &[a, b],
            Box::new(move |g, need| {
                vec![
                    need[0].then(|| zip_map(g, &bv, |x, y| x * y)),
                    need[1].then(|| zip_map(g, &av, |x, y| x * y)),
                ]
            }),
        ))
    }

    /// Multiplies by a constant.
    pub fn scale(&self, a: &Var<T>, c: T) -> Var<T> {
        self.record(
            a.value().map(|x| x * c),
            &[a],
            Box::new(move |g, _| vec![Some(g.map(|x| x * c))]),
        )
    }

    /// Multiplies every entry of `a` by the single value held in `s`.
    pub fn mul_scalar(&self, a: &Var<T>, s: &Var<T>) -> Result<Var<T>> {
        if s.value().len() != 1 {
            return Err(dim_err!("mul_scalar: factor has shape {:?}", s.shape()));
        }
        let sv = s.value().item();
        let av = a.value_rc();
        let s_shape = s.shape().to_vec();
        Ok(self.record(
            a.value().map(|x| x * sv),
            &[a, s],
            Box::new(move |g, need| {
                let gs = need[1].then(|| {
                    let dot = g.data().iter().zip(av.data()).map(|(&x, &y)| x * y).sum();
                    Tensor::full(&s_shape, dot)
                });
                vec![need[0].then(|| g.map(|x| x * sv)), gs]
            }),
        ))
    }

    /// Adds a row vector (`n` or `1 x n`) to every row of an `m x n` matrix.
    pub fn add_row(&self, a: &Var<T>, bias: &Var<T>) -> Result<Var<T>> {
        let (m, n) = mat(a.shape())?;
        if bias.value().len() != n {
            return Err(dim_err!(
                "add_row: bias {:?} for matrix {:?}",
                bias.shape(),
                a.shape()
            ));
        }
        let mut v = a.value().clone();
        let b = bias.value().data();
        for row in v.data_mut().chunks_mut(n.max(1)) {
            for (x, &bb) in row.iter_mut().zip(b) {
                *x += bb;
            }
        }
        let b_shape = bias.shape().to_vec();
        Ok(self.record(
            v,
            &[a, bias],
            Box::new(move |g, need| {
                let gb = need[1].then(|| {
                    let mut acc = vec![T::zero(); n];
                    for r in 0..m {
                        for (s, &x) in acc.iter_mut().zip(g.row(r)) {
                            *s += x;
                        }
                    }
                    Tensor::new_allow_empty(b_shape.clone(), acc).expect("bias shape")
                });
                vec![need[0].then(|| g.clone()), gb]
            }),
        ))
    }

    pub fn matmul(&self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        let (m, k) = mat(a.shape())?;
        let (k2, n) = mat(b.shape())?;
        if k != k2 {
            return Err(dim_err!(
                "matmul: inner dimensions of {:?} and {:?} differ",
                a.shape(),
                b.shape()
            ));
        }
        let mut out = vec![T::zero(); m * n];
        gemm_into(
            &mut out,
            (m, k, n),
            (a.value().data(), k as isize, 1),
            (b.value().data(), n as isize, 1),
        );
        let (av, bv) = (a.value_rc(), b.value_rc());
        Ok(self.record(
            Tensor::new_allow_empty(vec![m, n], out)?,
            &[a, b],
            Box::new(move |g, need| {
                // dA = dC B^T, dB = A^T dC
                let ga = need[0].then(|| {
                    let mut d = vec![T::zero(); m * k];
                    gemm_into(
                        &mut d,
                        (m, n, k),
                        (g.data(), n as isize, 1),
                        (bv.data(), 1, n as isize),
                    );
                    Tensor::new_allow_empty(vec![m, k], d).expect("shape")
                });
                let gb = need[1].then(|| {
                    let mut d = vec![T::zero(); k * n];
                    gemm_into(
                        &mut d,
                        (k, m, n),
                        (av.data(), 1, k as isize),
                        (g.data(), n as isize, 1),
                    );
                    Tensor::new_allow_empty(vec![k, n], d).expect("shape")
                });
                vec![ga, gb]
            }),
        ))
    }

    /// `a W + b`: the affine layer used throughout the models.
    pub fn affine(&self, a: &Var<T>, w: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        let h = self.matmul(a, w)?;
        self.add_row(&h, b)
    }

    fn unary(
        &self,
        a: &Var<T>,
        f: impl Fn(T) -> T,
        df: impl Fn(T, T) -> T + 'static,
    ) -> Var<T> {
        let v = a.value().map(&f);
        let av = a.value_rc();
        let out = Rc::new(v.clone());
        let out_c = Rc::clone(&out);
        self.record(
            v,
            &[a],
            Box::new(move |g, _| {
                let data = g
                    .data()
                    .iter()
                    .zip(av.data())
                    .zip(out_c.data())
                    .map(|((&gg, &x), &y)| gg * df(x, y))
                    .collect();
                vec![Some(Tensor::new_allow_empty(g.shape().to_vec(), data).expect("shape"))]
            }),
        )
    }

    pub fn relu(&self, a: &Var<T>) -> Var<T> {
        self.unary(
            a,
            |x| x.max(T::zero()),
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn softplus(&self, a: &Var<T>) -> Var<T> {
        self.unary(a, softplus_scalar, |x, _| sigmoid_scalar(x))
    }

    pub fn exp(&self, a: &Var<T>) -> Var<T> {
        self.unary(a, T::exp, |_, y| y)
    }

    pub fn ln(&self, a: &Var<T>) -> Var<T> {
        self.unary(a, T::ln, |x, _| T::one() / x)
    }

    /// `max(a, floor)`; the gradient is cut where the floor is active.
    pub fn clamp_min(&self, a: &Var<T>, floor: T) -> Var<T> {
        self.unary(
            a,
            move |x| x.max(floor),
            move |x, _| if x > floor { T::one() } else { T::zero() },
        )
    }

    pub fn sum(&self, a: &Var<T>) -> Var<T> {
        let shape = a.shape().to_vec();
        self.record(
            Tensor::scalar(a.value().sum()),
            &[a],
            Box::new(move |g, _| vec![Some(Tensor::full(&shape, g.item()))]),
        )
    }

    pub fn mean(&self, a: &Var<T>) -> Var<T> {
        let n = T::from_usize_lossy(a.value().len().max(1));
        let s = self.sum(a);
        self.scale(&s, T::one() / n)
    }

    /// Rows `idx` of `a` (repeats allowed).
    pub fn gather_rows(&self, a: &Var<T>, idx: &[usize]) -> Result<Var<T>> {
        let (m, n) = mat(a.shape())?;
        if idx.iter().any(|&i| i >= m) {
            return Err(dim_err!("gather_rows: index out of range for {m} rows"));
        }
        let mut out = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            out.extend_from_slice(a.value().row(i));
        }
        let idx = idx.to_vec();
        Ok(self.record(
            Tensor::new_allow_empty(vec![idx.len(), n], out)?,
            &[a],
            Box::new(move |g, _| {
                let mut d = Tensor::zeros(&[m, n]);
                let dd = d.data_mut();
                for (r, &i) in idx.iter().enumerate() {
                    for (x, &y) in dd[i * n..(i + 1) * n].iter_mut().zip(g.row(r)) {
                        *x += y;
                    }
                }
                vec![Some(d)]
            }),
        ))
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&self, parts: &[&Var<T>]) -> Result<Var<T>> {
        let m = parts
            .first()
            .map(|p| p.rows())
            .ok_or_else(|| dim_err!("concat_cols of nothing"))?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (pm, pn) = mat(p.shape())?;
            if pm != m {
                return Err(dim_err!("concat_cols: row counts {pm} and {m}"));
            }
            widths.push(pn);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![T::zero(); m * total];
        let mut off = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            for r in 0..m {
                out[r * total + off..r * total + off + w].copy_from_slice(p.value().row(r));
            }
            off += w;
        }
        Ok(self.record(
            Tensor::new_allow_empty(vec![m, total], out)?,
            parts,
            Box::new(move |g, need| {
                let mut off = 0;
                let mut res = Vec::with_capacity(widths.len());
                for (&w, &nd) in widths.iter().zip(need) {
                    res.push(nd.then(|| {
                        let mut d = Vec::with_capacity(m * w);
                        for r in 0..m {
                            d.extend_from_slice(&g.row(r)[off..off + w]);
                        }
                        Tensor::new_allow_empty(vec![m, w], d).expect("shape")
                    }));
                    off += w;
                }
                res
            }),
        ))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&self, a: &Var<T>, start: usize, end: usize) -> Result<Var<T>> {
        let (m, n) = mat(a.shape())?;
        if start > end || end > n {
            return Err(dim_err!("slice_cols {start}..{end} of {n} columns"));
        }
        let w = end - start;
        let mut out = Vec::with_capacity(m * w);
        for r in 0..m {
            out.extend_from_slice(&a.value().row(r)[start..end]);
        }
        Ok(self.record(
            Tensor::new_allow_empty(vec![m, w], out)?,
            &[a],
            Box::new(move |g, _| {
                let mut d = Tensor::zeros(&[m, n]);
                for r in 0..m {
                    d.data_mut()[r * n + start..r * n + end].copy_from_slice(g.row(r));
                }
                vec![Some(d)]
            }),
        ))
    }

    /// Appends a column of ones (turns a hidden activation into an affine basis).
    pub fn append_ones_col(&self, a: &Var<T>) -> Result<Var<T>> {
        let ones = self.constant(Tensor::ones(&[a.rows(), 1]));
        self.concat_cols(&[a, &ones])
    }

    /// Per-segment mean of the rows of `values` (`P x C`); empty segments give zeros.
    pub fn segment_mean(&self, values: &Var<T>, offsets: &[usize]) -> Result<Var<T>> {
        let (p, c) = mat(values.shape())?;
        if offsets.first() != Some(&0) || offsets.last() != Some(&p) {
            return Err(dim_err!("segment_mean: offsets do not cover {p} rows"));
        }
        let n_seg = offsets.len() - 1;
        let mut out = vec![T::zero(); n_seg * c];
        for i in 0..n_seg {
            let (lo, hi) = (offsets[i], offsets[i + 1]);
            if hi == lo {
                continue;
            }
            let inv = T::one() / T::from_usize_lossy(hi - lo);
            let dst = &mut out[i * c..(i + 1) * c];
            for r in lo..hi {
                for (d, &v) in dst.iter_mut().zip(values.value().row(r)) {
                    *d += v * inv;
                }
            }
        }
        let offsets = offsets.to_vec();
        Ok(self.record(
            Tensor::new_allow_empty(vec![n_seg, c], out)?,
            &[values],
            Box::new(move |g, _| {
                let mut d = vec![T::zero(); p * c];
                for i in 0..n_seg {
                    let (lo, hi) = (offsets[i], offsets[i + 1]);
                    if hi == lo {
                        continue;
                    }
                    let inv = T::one() / T::from_usize_lossy(hi - lo);
                    for r in lo..hi {
                        for (x, &y) in d[r * c..(r + 1) * c].iter_mut().zip(g.row(i)) {
                            *x = y * inv;
                        }
                    }
                }
                vec![Some(Tensor::new_allow_empty(vec![p, c], d).expect("shape"))]
            }),
        ))
    }

    /// Segment mean of outer products: row `i` of the result is the flattened
    /// `H x C` matrix `(1/n_i) sum_p z_p f_{src(p)}^T` over the pairs of segment `i`.
    ///
    /// Contracting this with a `(H*C) x c_out` weight evaluates a kernel MLP whose
    /// last layer is linear in the hidden activations `z`, without materialising
    /// a `c_out x c_in` matrix per pair.
    pub fn pair_outer_mean(
        &self,
        z: &Var<T>,
        f: &Var<T>,
        seg: Rc<Segments>,
    ) -> Result<Var<T>> {
        let (p, h) = mat(z.shape())?;
        let (n_src, c) = mat(f.shape())?;
        if p != seg.num_pairs() {
            return Err(dim_err!("pair_outer_mean: {p} rows for {} pairs", seg.num_pairs()));
        }
        seg.validate(n_src)?;
        let n_seg = seg.num_segments();
        let hc = h * c;
        let mut out = vec![T::zero(); n_seg * hc];
        let (zv, fv) = (z.value_rc(), f.value_rc());
        for i in 0..n_seg {
            let r = seg.range(i);
            if r.is_empty() {
                continue;
            }
            let inv = T::one() / T::from_usize_lossy(r.len());
            let dst = &mut out[i * hc..(i + 1) * hc];
            for q in r {
                let fj = fv.row(seg.src[q]);
                for (k, &zk) in zv.row(q).iter().enumerate() {
                    let w = zk * inv;
                    for (d, &x) in dst[k * c..(k + 1) * c].iter_mut().zip(fj) {
                        *d += w * x;
                    }
                }
            }
        }
        Ok(self.record(
            Tensor::new_allow_empty(vec![n_seg, hc], out)?,
            &[z, f],
            Box::new(move |g, need| {
                let mut dz = need[0].then(|| vec![T::zero(); p * h]);
                let mut df = need[1].then(|| vec![T::zero(); n_src * c]);
                for i in 0..n_seg {
                    let r = seg.range(i);
                    if r.is_empty() {
                        continue;
                    }
                    let inv = T::one() / T::from_usize_lossy(r.len());
                    let gi = g.row(i);
                    for q in r {
                        let j = seg.src[q];
                        let fj = fv.row(j);
                        if let Some(dz) = dz.as_mut() {
                            for k in 0..h {
                                let dot: T = gi[k * c..(k + 1) * c]
                                    .iter()
                                    .zip(fj)
                                    .map(|(&a, &b)| a * b)
                                    .sum();
                                dz[q * h + k] = dot * inv;
                            }
                        }
                        if let Some(df) = df.as_mut() {
                            let dst = &mut df[j * c..(j + 1) * c];
                            for (k, &zk) in zv.row(q).iter().enumerate() {
                                let w = zk * inv;
                                for (d, &x) in dst.iter_mut().zip(&gi[k * c..(k + 1) * c]) {
                                    *d += w * x;
                                }
                            }
                        }
                    }
                }
                vec![
                    dz.map(|d| Tensor::new_allow_empty(vec![p, h], d).expect("shape")),
                    df.map(|d| Tensor::new_allow_empty(vec![n_src, c], d).expect("shape")),
                ]
            }),
        ))
    }

    /// Segment mean of elementwise products: row `i` is `(1/n_i) sum_p w_p * f_{src(p)}`
    /// with `w` of shape `P x C` and `f` of shape `N_src x C`.
    pub fn pair_weighted_mean(
        &self,
        w: &Var<T>,
        f: &Var<T>,
        seg: Rc<Segments>,
    ) -> Result<Var<T>> {
        let (p, c) = mat(w.shape())?;
        let (n_src, c2) = mat(f.shape())?;
        if c != c2 || p != seg.num_pairs() {
            return Err(dim_err!(
                "pair_weighted_mean: weights {:?}, features {:?}, {} pairs",
                w.shape(),
                f.shape(),
                seg.num_pairs()
            ));
        }
        seg.validate(n_src)?;
        let n_seg = seg.num_segments();
        let mut out = vec![T::zero(); n_seg * c];
        let (wv, fv) = (w.value_rc(), f.value_rc());
        for i in 0..n_seg {
            let r = seg.range(i);
            if r.is_empty() {
                continue;
            }
            let inv = T::one() / T::from_usize_lossy(r.len());
            let dst = &mut out[i * c..(i + 1) * c];
            for q in r {
                for ((d, &a), &b) in dst.iter_mut().zip(wv.row(q)).zip(fv.row(seg.src[q])) {
                    *d += a * b * inv;
                }
            }
        }
        Ok(self.record(
            Tensor::new_allow_empty(vec![n_seg, c], out)?,
            &[w, f],
            Box::new(move |g, need| {
                let mut dw = need[0].then(|| vec![T::zero(); p * c]);
                let mut df = need[1].then(|| vec![T::zero(); n_src * c]);
                for i in 0..n_seg {
                    let r = seg.range(i);
                    if r.is_empty() {
                        continue;
                    }
                    let inv = T::one() / T::from_usize_lossy(r.len());
                    let gi = g.row(i);
                    for q in r {
                        let j = seg.src[q];
                        if let Some(dw) = dw.as_mut() {
                            for ((d, &gg), &x) in dw[q * c..(q + 1) * c]
                                .iter_mut()
                                .zip(gi)
                                .zip(fv.row(j))
                            {
                                *d = gg * x * inv;
                            }
                        }
                        if let Some(df) = df.as_mut() {
                            for ((d, &gg), &a) in df[j * c..(j + 1) * c]
                                .iter_mut()
                                .zip(gi)
                                .zip(wv.row(q))
                            {
                                *d += gg * a * inv;
                            }
                        }
                    }
                }
                vec![
                    dw.map(|d| Tensor::new_allow_empty(vec![p, c], d).expect("shape")),
                    df.map(|d| Tensor::new_allow_empty(vec![n_src, c], d).expect("shape")),
                ]
            }),
        ))
    }

    /// Sum over all entries of `-0.5 ln(2 pi sigma^2) - (y - mu)^2 / (2 sigma^2)`.
    pub fn gaussian_log_likelihood(
        &self,
        y: &Tensor<T>,
        mu: &Var<T>,
        sigma: &Var<T>,
    ) -> Result<Var<T>> {
        if y.shape() != mu.shape() || y.shape() != sigma.shape() {
            return Err(dim_err!(
                "log-likelihood: y {:?}, mu {:?}, sigma {:?}",
                y.shape(),
                mu.shape(),
                sigma.shape()
            ));
        }
        if let Some(s) = sigma.value().data().iter().find(|&&s| !(s > T::zero())) {
            return Err(Error::Domain(format!("sigma must be positive, got {s}")));
        }
        let half_ln_2pi = T::lit(0.5) * (T::PI() + T::PI()).ln();
        let ll = y
            .data()
            .iter()
            .zip(mu.value().data())
            .zip(sigma.value().data())
            .map(|((&y, &m), &s)| {
                let z = (y - m) / s;
                -half_ln_2pi - s.ln() - T::lit(0.5) * z * z
            })
            .sum();
        let (yv, mv, sv) = (y.clone(), mu.value_rc(), sigma.value_rc());
        Ok(self.record(
            Tensor::scalar(ll),
            &[mu, sigma],
            Box::new(move |g, need| {
                let g = g.item();
                let mut dmu = Vec::with_capacity(yv.len());
                let mut dsig = Vec::with_capacity(yv.len());
                for ((&y, &m), &s) in yv.data().iter().zip(mv.data()).zip(sv.data()) {
                    let r = y - m;
                    let s2 = s * s;
                    dmu.push(g * r / s2);
                    dsig.push(g * (r * r / (s2 * s) - T::one() / s));
                }
                let shape = yv.shape().to_vec();
                vec![
                    need[0].then(|| Tensor::new_allow_empty(shape.clone(), dmu).expect("shape")),
                    need[1].then(|| Tensor::new_allow_empty(shape, dsig).expect("shape")),
                ]
            }),
        ))
    }
}
