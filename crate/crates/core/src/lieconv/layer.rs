use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{KernelMlp, KernelOutput};
use super::neighborhood::{all_neighborhoods, calibrate_radius, PairGeometry};
use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{dim_err, Error, Result};
use crate::lie::{GroupTag, LiftedPoint};
use crate::scalar::Real;

/// Hyperparameters of one convolution layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LieConvSpec {
    pub tag: GroupTag,
    pub c_in: usize,
    pub c_out: usize,
    /// Average share of points inside the radius.
    pub fraction: f64,
    /// Monte Carlo cap per neighbourhood; `None` keeps full neighbourhoods.
    pub n_mc: Option<usize>,
    pub alpha: f64,
    pub hidden: Vec<usize>,
    pub separable: bool,
    /// Adds a learned per-channel offset to every output row.
    #[serde(default)]
    pub bias: bool,
}

impl LieConvSpec {
    pub fn new(tag: GroupTag, c_in: usize, c_out: usize) -> Self {
        Self {
            tag,
            c_in,
            c_out,
            fraction: 5.0 / 32.0,
            n_mc: None,
            alpha: 1.0,
            hidden: vec![32, 32, 32],
            separable: false,
            bias: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_in == 0 || self.c_out == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::Config(format!(
                "fraction must lie in (0, 1], got {}",
                self.fraction
            )));
        }
        if self.n_mc == Some(0) {
            return Err(Error::Config("n_mc must be at least 1".into()));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// A full or separable LieConv layer. Parameters live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct LieConvLayer {
    pub spec: LieConvSpec,
    pub mlp: KernelMlp,
    /// Channel-mixing matrix `c_in x c_out` of the separable variant.
    pub pointwise: Option<ParamId>,
    /// `1 x c_out` offset, zero at init.
    pub bias: Option<ParamId>,
}

impl LieConvLayer {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        prefix: &str,
        spec: LieConvSpec,
        rng: &mut R,
    ) -> Result<Self> {
        spec.validate()?;
        let output = if spec.separable {
            KernelOutput::Depthwise { c_in: spec.c_in }
        } else {
            KernelOutput::Full {
                c_in: spec.c_in,
                c_out: spec.c_out,
            }
        };
        let mlp = KernelMlp::new(
            store,
            &format!("{prefix}.kernel"),
            spec.tag.embedding_dim(),
            &spec.hidden,
            output,
            rng,
        )?;
        let pointwise = if spec.separable {
            Some(store.add_uniform(format!("{prefix}.pointwise"), spec.c_in, spec.c_out, rng)?)
        } else {
            None
        };
        let bias = if spec.bias {
            Some(store.add(format!("{prefix}.bias"), Tensor::zeros(&[1, spec.c_out]))?)
        } else {
            None
        };
        Ok(Self {
            spec,
            mlp,
            pointwise,
            bias,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.mlp.param_ids();
        ids.extend(self.pointwise);
        ids.extend(self.bias);
        ids
    }

    pub fn num_params<T: Real>(&self, store: &ParamStore<T>) -> usize {
        self.param_ids().iter().map(|&id| store.value(id).len()).sum()
    }

    /// Zeroes the weights that produce the output, making the layer emit 0.
    pub fn zero_output<T: Real>(&self, store: &mut ParamStore<T>) {
        let id = self.pointwise.unwrap_or(self.mlp.output_param());
        store.value_mut(id).fill(T::zero());
        if let Some(b) = self.bias {
            store.value_mut(b).fill(T::zero());
        }
    }

    /// Calibrates the radius on `sources` and collects the (optionally
    /// subsampled) pairs for every center.
    pub fn geometry<T: Real, R: Rng + ?Sized>(
        &self,
        centers: &[LiftedPoint<T>],
        sources: &[LiftedPoint<T>],
        rng: &mut R,
    ) -> Result<PairGeometry<T>> {
        let alpha = T::lit(self.spec.alpha);
        let radius = calibrate_radius(sources, T::lit(self.spec.fraction), alpha)?;
        let full = all_neighborhoods(centers, sources, radius, alpha)?;
        PairGeometry::build(centers, sources, &full, radius, self.spec.n_mc, rng)
    }

    /// Applies the layer to features `f` (one row per feature source) over the
    /// pairs of `geom`, giving one output row per center.
    pub fn forward<T: Real>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        geom: &PairGeometry<T>,
        f: &Var<T>,
    ) -> Result<Var<T>> {
        Ok(self.forward_many(tape, store, geom, &[f])?.remove(0))
    }

    /// [`forward`](Self::forward) for several feature sets sharing one kernel
    /// evaluation.
    pub fn forward_many<T: Real>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        geom: &PairGeometry<T>,
        fs: &[&Var<T>],
    ) -> Result<Vec<Var<T>>> {
        for f in fs {
            if f.shape().len() != 2 || f.cols() != self.spec.c_in {
                return Err(dim_err!(
                    "layer expects {} input channels, features have shape {:?}",
                    self.spec.c_in,
                    f.shape()
                ));
            }
        }
        if geom.tag != self.spec.tag {
            return Err(Error::Contract(format!(
                "geometry for {} fed to a {} layer",
                geom.tag, self.spec.tag
            )));
        }
        let outs = self.convolve(tape, store, geom, fs)?;
        match self.bias {
            Some(b) => {
                let b = tape.param(store, b);
                outs.iter().map(|h| tape.add_row(h, &b)).collect()
            }
            None => Ok(outs),
        }
    }

    fn convolve<T: Real>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        geom: &PairGeometry<T>,
        fs: &[&Var<T>],
    ) -> Result<Vec<Var<T>>> {
        if geom.num_pairs() == 0 {
            let zeros = Tensor::new_allow_empty(
                vec![geom.num_centers, self.spec.c_out],
                vec![T::zero(); geom.num_centers * self.spec.c_out],
            )?;
            return Ok(fs.iter().map(|_| tape.constant(zeros.clone())).collect());
        }
        let emb = tape.constant(geom.embeddings.clone());
        let z = self.mlp.hidden_features(tape, store, &emb)?;
        let w = tape.param(store, self.mlp.output_param());
        match self.pointwise {
            None => fs
                .iter()
                .map(|f| {
                    let m = tape.pair_outer_mean(&z, f, geom.segments.clone())?;
                    tape.matmul(&m, &w)
                })
                .collect(),
            Some(p) => {
                let g = tape.matmul(&z, &w)?;
                let wp = tape.param(store, p);
                fs.iter()
                    .map(|f| {
                        let h = tape.pair_weighted_mean(&g, f, geom.segments.clone())?;
                        tape.matmul(&h, &wp)
                    })
                    .collect()
            }
        }
    }
}

/// One full convolution: calibrate, gather neighbourhoods, convolve.
pub fn lieconv_forward<T: Real, R: Rng + ?Sized>(
    layer: &LieConvLayer,
    tape: &Tape<T>,
    store: &ParamStore<T>,
    centers: &[LiftedPoint<T>],
    sources: &[LiftedPoint<T>],
    f: &Var<T>,
    rng: &mut R,
) -> Result<Var<T>> {
    if layer.spec.separable {
        return Err(Error::Contract(
            "lieconv_forward needs a full layer; use separable_lieconv_forward".into(),
        ));
    }
    let geom = layer.geometry(centers, sources, rng)?;
    layer.forward(tape, store, &geom, f)
}

/// Separable counterpart of [`lieconv_forward`].
pub fn separable_lieconv_forward<T: Real, R: Rng + ?Sized>(
    layer: &LieConvLayer,
    tape: &Tape<T>,
    store: &ParamStore<T>,
    centers: &[LiftedPoint<T>],
    sources: &[LiftedPoint<T>],
    f: &Var<T>,
    rng: &mut R,
) -> Result<Var<T>> {
    if !layer.spec.separable {
        return Err(Error::Contract(
            "separable_lieconv_forward needs a separable layer".into(),
        ));
    }
    let geom = layer.geometry(centers, sources, rng)?;
    layer.forward(tape, store, &geom, f)
}
