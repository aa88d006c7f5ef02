use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Architecture, ConvSettings, ModelConfig};
use super::encoder::{encode_image, make_grid, RbfPsi};
use crate::autodiff::{Checkpoint, ParamId, ParamStore, Segments, Tape, Tensor, Var};
use crate::error::{dim_err, Error, Result};
use crate::lie::{lift_all, GroupTag, LiftedPoint, Point};
use crate::lieconv::{
    all_neighborhoods, calibrate_radius, fingerprint, LieConvLayer, LieConvSpec, PairGeometry,
};
use crate::task::{pixel_coords, ImageObservation, TaskSet};

/// Per-target Gaussian predictive: `M x d_y` means and standard deviations.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveDistribution {
    pub mu: Tensor<f64>,
    pub sigma: Tensor<f64>,
}

#[derive(Clone, Copy, Debug)]
struct Affine {
    w: ParamId,
    b: ParamId,
}

impl Affine {
    fn new<R: Rng + ?Sized>(
        store: &mut ParamStore<f64>,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            w: store.add_uniform(format!("{name}.w"), fan_in, fan_out, rng)?,
            b: store.add(format!("{name}.b"), Tensor::zeros(&[1, fan_out]))?,
        })
    }

    fn apply(&self, tape: &Tape<f64>, store: &ParamStore<f64>, x: &Var<f64>) -> Result<Var<f64>> {
        tape.affine(x, &tape.param(store, self.w), &tape.param(store, self.b))
    }
}

#[derive(Clone, Debug)]
enum Net {
    Regress {
        psi: RbfPsi,
        convs: Vec<LieConvLayer>,
        smoother: Option<RbfPsi>,
        head: Affine,
    },
    Image {
        encoder: LieConvLayer,
        fc: Affine,
        blocks: Vec<[LieConvLayer; 2]>,
        head: Affine,
    },
}

/// Full neighbourhoods keyed by point-cloud fingerprint; recomputing them
/// would give identical results, so this only saves time.
#[derive(Default)]
struct NeighborhoodCache {
    map: Mutex<HashMap<u64, Arc<(f64, Segments)>>>,
}

const CACHE_CAPACITY: usize = 64;

impl NeighborhoodCache {
    fn get(&self, points: &[LiftedPoint<f64>], conv: &ConvSettings, alpha: f64) -> Result<Arc<(f64, Segments)>> {
        let key = fingerprint(points, &[conv.fraction, alpha]);
        if let Some(hit) = self.map.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let r = calibrate_radius(points, conv.fraction, alpha)?;
        let full = all_neighborhoods(points, points, r, alpha)?;
        let entry = Arc::new((r, full));
        let mut map = self.map.lock().expect("cache lock");
        if map.len() >= CACHE_CAPACITY {
            map.clear();
        }
        map.insert(key, entry.clone());
        Ok(entry)
    }
}

/// The EquivCNP model: encoder, LieConv decoder and Gaussian head, with its
/// parameters.
pub struct EquivCnp {
    pub config: ModelConfig,
    pub params: ParamStore<f64>,
    net: Net,
    cache: NeighborhoodCache,
}

impl std::fmt::Debug for EquivCnp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EquivCnp")
            .field("config", &self.config)
            .field("num_params", &self.params.num_scalars())
            .finish()
    }
}

impl Clone for EquivCnp {
    fn clone(&self) -> Self {
        Self {
            config: self.config.clone(),
            params: self.params.clone(),
            net: self.net.clone(),
            cache: NeighborhoodCache::default(),
        }
    }
}

fn conv_spec(
    cfg: &ModelConfig,
    c_in: usize,
    c_out: usize,
    s: &ConvSettings,
    separable: bool,
    bias: bool,
) -> LieConvSpec {
    LieConvSpec {
        tag: cfg.tag,
        c_in,
        c_out,
        fraction: s.fraction,
        n_mc: s.n_mc,
        alpha: cfg.alpha,
        hidden: cfg.kernel_hidden.clone(),
        separable,
        bias,
    }
}

/// Renumbers lifted points so each carries its own feature row.
fn own_rows(points: &[LiftedPoint<f64>]) -> Vec<LiftedPoint<f64>> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| LiftedPoint { source: i, ..*p })
        .collect()
}

impl EquivCnp {
    /// Fresh model with weights drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let width = config.y_dim * (config.multiplicity + 1);
        let net = match config.architecture {
            Architecture::Regress1d => {
                let psi = RbfPsi::new(&mut store, "psi", config.init_bandwidth)?;
                let mut convs = Vec::new();
                let mut c_in = width;
                for (l, &c) in config.channels.iter().enumerate() {
                    let spec = conv_spec(&config, c_in, c, &config.decoder, false, true);
                    convs.push(LieConvLayer::new(&mut store, &format!("decoder.{l}"), spec, &mut rng)?);
                    c_in = c;
                }
                let smoother = if config.smooth_output {
                    Some(RbfPsi::new(&mut store, "smooth", config.init_bandwidth)?)
                } else {
                    None
                };
                let head = Affine::new(&mut store, "head", c_in, 2 * config.y_dim, &mut rng)?;
                Net::Regress {
                    psi,
                    convs,
                    smoother,
                    head,
                }
            }
            Architecture::Image2d => {
                let ce = config.encoder_channels;
                let c = config.channels[0];
                let spec = conv_spec(&config, config.y_dim, ce, &config.encoder, false, false);
                let encoder = LieConvLayer::new(&mut store, "encoder", spec, &mut rng)?;
                let fc = Affine::new(&mut store, "fc", 2 * ce, c, &mut rng)?;
                let mut blocks = Vec::new();
                for b in 0..config.res_blocks {
                    let mut pair = Vec::new();
                    for s in 0..2 {
                        let spec = conv_spec(&config, c, c, &config.decoder, true, true);
                        pair.push(LieConvLayer::new(
                            &mut store,
                            &format!("block.{b}.{s}"),
                            spec,
                            &mut rng,
                        )?);
                    }
                    let second = pair.pop().expect("two convs");
                    let first = pair.pop().expect("two convs");
                    blocks.push([first, second]);
                }
                let head = Affine::new(&mut store, "head", c, 2 * config.y_dim, &mut rng)?;
                Net::Image {
                    encoder,
                    fc,
                    blocks,
                    head,
                }
            }
        };
        Ok(Self {
            config,
            params: store,
            net,
            cache: NeighborhoodCache::default(),
        })
    }

    /// Parameters of everything after the encoder.
    pub fn decoder_param_ids(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        match &self.net {
            Net::Regress {
                convs,
                smoother,
                head,
                ..
            } => {
                for c in convs {
                    ids.extend(c.param_ids());
                }
                if let Some(s) = smoother {
                    ids.extend([s.log_bandwidth, s.log_scale]);
                }
                ids.extend([head.w, head.b]);
            }
            Net::Image {
                fc, blocks, head, ..
            } => {
                ids.extend([fc.w, fc.b]);
                for b in blocks {
                    ids.extend(b[0].param_ids());
                    ids.extend(b[1].param_ids());
                }
                ids.extend([head.w, head.b]);
            }
        }
        ids
    }

    /// The RBF encoder of the 1D pathway.
    pub fn psi(&self) -> Option<&RbfPsi> {
        match &self.net {
            Net::Regress { psi, .. } => Some(psi),
            Net::Image { .. } => None,
        }
    }

    /// Convolution layers of the residual blocks (2D pathway).
    pub fn residual_blocks(&self) -> &[[LieConvLayer; 2]] {
        match &self.net {
            Net::Image { blocks, .. } => blocks,
            Net::Regress { .. } => &[],
        }
    }

    fn geometry<R: Rng + ?Sized>(
        &self,
        layer: &LieConvLayer,
        points: &[LiftedPoint<f64>],
        rng: &mut R,
    ) -> Result<PairGeometry<f64>> {
        let settings = ConvSettings {
            fraction: layer.spec.fraction,
            n_mc: layer.spec.n_mc,
        };
        let entry = self.cache.get(points, &settings, layer.spec.alpha)?;
        PairGeometry::build(points, points, &entry.1, entry.0, layer.spec.n_mc, rng)
    }

    /// Eval points of the 1D pathway: targets then grid (grid only when
    /// smoothing). Returns the points and the grid size.
    pub fn eval_points(&self, task: &TaskSet) -> Result<(Vec<Point<f64>>, usize)> {
        if self.psi().is_none() {
            return Err(Error::Contract("eval points belong to the 1D pathway".into()));
        }
        if task.target_x.is_empty() {
            return Err(Error::Contract("task has no targets".into()));
        }
        let xs = task.context_x.iter().chain(&task.target_x).map(|p| p[0]);
        let lo = xs.clone().fold(f64::INFINITY, f64::min);
        let hi = xs.fold(f64::NEG_INFINITY, f64::max);
        // Fixed margin keeps the grid a function of the data alone.
        let margin = 2.0 * self.config.init_bandwidth;
        let grid: Vec<Point<f64>> = make_grid(&[lo], &[hi], self.config.gamma, margin)?
            .into_iter()
            .map(|g| [g[0], 0.0])
            .collect();
        let g = grid.len();
        let mut pts = if self.config.smooth_output {
            Vec::new()
        } else {
            task.target_x.iter().map(|p| [p[0], 0.0]).collect()
        };
        pts.extend(grid);
        Ok((pts, g))
    }

    /// Recorded forward pass of the 1D pathway: `(mu, sigma)` of shape `M x d_y`.
    pub fn forward_task<R: Rng + ?Sized>(
        &self,
        tape: &Tape<f64>,
        task: &TaskSet,
        rng: &mut R,
    ) -> Result<(Var<f64>, Var<f64>)> {
        task.validate()?;
        if task.y_dim != self.config.y_dim {
            return Err(dim_err!(
                "task outputs have {} dims, model expects {}",
                task.y_dim,
                self.config.y_dim
            ));
        }
        let Net::Regress {
            psi,
            convs,
            smoother,
            head,
        } = &self.net
        else {
            return Err(Error::Contract("image models take an ImageObservation".into()));
        };
        let store = &self.params;
        let (eval, _) = self.eval_points(task)?;
        let context_x: Vec<Point<f64>> = task.context_x.iter().map(|p| [p[0], 0.0]).collect();
        let mut f = psi.encode(
            tape,
            store,
            &context_x,
            &task.context_y,
            task.y_dim,
            self.config.multiplicity,
            &eval,
        )?;
        let lifted = lift_all(&eval, GroupTag::T1, 1, rng)?;
        for conv in convs {
            let geom = self.geometry(conv, &lifted, rng)?;
            f = tape.relu(&conv.forward(tape, store, &geom, &f)?);
        }
        let m = task.num_targets();
        let feats = match smoother {
            Some(s) => {
                let targets: Vec<Point<f64>> = task.target_x.iter().map(|p| [p[0], 0.0]).collect();
                let w = s.matrix(tape, store, &targets, &eval)?;
                tape.matmul(&w, &f)?
            }
            None => tape.gather_rows(&f, &(0..m).collect::<Vec<_>>())?,
        };
        let out = head.apply(tape, store, &feats)?;
        self.split_head(tape, &out)
    }

    fn split_head(&self, tape: &Tape<f64>, out: &Var<f64>) -> Result<(Var<f64>, Var<f64>)> {
        let d = self.config.y_dim;
        let mu = tape.slice_cols(out, 0, d)?;
        let raw = tape.slice_cols(out, d, 2 * d)?;
        let sigma = tape.clamp_min(&tape.softplus(&raw), self.config.sigma_floor);
        Ok((mu, sigma))
    }

    /// Recorded forward pass of the image pathway over every pixel.
    pub fn forward_image<R: Rng + ?Sized>(
        &self,
        tape: &Tape<f64>,
        obs: &ImageObservation,
        rng: &mut R,
    ) -> Result<(Var<f64>, Var<f64>)> {
        let Net::Image {
            encoder,
            fc,
            blocks,
            head,
        } = &self.net
        else {
            return Err(Error::Contract("the 1D model takes a TaskSet".into()));
        };
        if obs.channels != self.config.y_dim {
            return Err(dim_err!(
                "image has {} channels, model expects {}",
                obs.channels,
                self.config.y_dim
            ));
        }
        let store = &self.params;
        let coords = pixel_coords(obs.height, obs.width);
        let k = if self.config.tag == GroupTag::SE2 {
            self.config.k_lift
        } else {
            1
        };
        let lifted = lift_all(&coords, self.config.tag, k, rng)?;
        let geom = self.geometry(encoder, &lifted, rng)?;
        let e = encode_image(tape, store, encoder, &geom, &obs.pixels, &obs.mask, obs.channels)?;
        let lifted = own_rows(&lifted);
        let mut x = fc.apply(tape, store, &e)?;
        for [c1, c2] in blocks {
            let g1 = self.geometry(c1, &lifted, rng)?;
            let y = c1.forward(tape, store, &g1, &tape.relu(&x))?;
            let g2 = self.geometry(c2, &lifted, rng)?;
            let y = c2.forward(tape, store, &g2, &tape.relu(&y))?;
            x = tape.add(&x, &y)?;
        }
        let mut out = head.apply(tape, store, &x)?;
        if k > 1 {
            let offsets: Vec<usize> = (0..=coords.len()).map(|i| i * k).collect();
            out = tape.segment_mean(&out, &offsets)?;
        }
        self.split_head(tape, &out)
    }

    /// Predictive distribution at the targets of `task`.
    pub fn predict<R: Rng + ?Sized>(&self, task: &TaskSet, rng: &mut R) -> Result<PredictiveDistribution> {
        let tape = Tape::new();
        let (mu, sigma) = self.forward_task(&tape, task, rng)?;
        Ok(PredictiveDistribution {
            mu: mu.value().clone(),
            sigma: sigma.value().clone(),
        })
    }

    /// Predictive distribution at every pixel.
    pub fn predict_image<R: Rng + ?Sized>(
        &self,
        obs: &ImageObservation,
        rng: &mut R,
    ) -> Result<PredictiveDistribution> {
        let tape = Tape::new();
        let (mu, sigma) = self.forward_image(&tape, obs, rng)?;
        Ok(PredictiveDistribution {
            mu: mu.value().clone(),
            sigma: sigma.value().clone(),
        })
    }

    /// Recorded training loss of one 1D task.
    pub fn task_loss<R: Rng + ?Sized>(&self, tape: &Tape<f64>, task: &TaskSet, rng: &mut R) -> Result<Var<f64>> {
        let y = task
            .target_y
            .as_ref()
            .ok_or_else(|| Error::Contract("training needs target outputs".into()))?;
        let (mu, sigma) = self.forward_task(tape, task, rng)?;
        let y = Tensor::new(vec![task.num_targets(), task.y_dim], y.clone())?;
        nll_loss(tape, &mu, &sigma, &y)
    }

    /// Recorded training loss of one image (all pixels are targets).
    pub fn image_loss<R: Rng + ?Sized>(
        &self,
        tape: &Tape<f64>,
        obs: &ImageObservation,
        rng: &mut R,
    ) -> Result<Var<f64>> {
        let (mu, sigma) = self.forward_image(tape, obs, rng)?;
        let y = Tensor::new(vec![obs.num_pixels(), obs.channels], obs.target_rows())?;
        nll_loss(tape, &mu, &sigma, &y)
    }

    /// Mean per-target log-likelihood of a task with known target outputs.
    pub fn task_log_likelihood<R: Rng + ?Sized>(&self, task: &TaskSet, rng: &mut R) -> Result<f64> {
        let tape = Tape::new();
        Ok(-self.task_loss(&tape, task, rng)?.value().item())
    }

    pub fn image_log_likelihood<R: Rng + ?Sized>(
        &self,
        obs: &ImageObservation,
        rng: &mut R,
    ) -> Result<f64> {
        let tape = Tape::new();
        Ok(-self.image_loss(&tape, obs, rng)?.value().item())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_store(self.config.to_json(), &self.params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.checkpoint().save(path)
    }

    /// Rebuilds the model described by the checkpoint header and loads its weights.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config = ModelConfig::from_json(&ckpt.header)?;
        let mut model = Self::new(config, 0)?;
        ckpt.restore_into(&mut model.params)?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Negative Gaussian log-likelihood averaged over targets (summed over output dims).
pub fn nll_loss(tape: &Tape<f64>, mu: &Var<f64>, sigma: &Var<f64>, y: &Tensor<f64>) -> Result<Var<f64>> {
    let m = mu.rows().max(1) as f64;
    let ll = tape.gaussian_log_likelihood(y, mu, sigma)?;
    Ok(tape.scale(&ll, -1.0 / m))
}
