//! Numerical symmetry checks shared by the CLI and the test suites. Every
//! check runs in the exact-neighbourhood regime (no Monte Carlo subsampling).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParamStore, Tape, Tensor};
use crate::data::{sample_task_1d, KernelKind, TaskConfig1D};
use crate::error::Result;
use crate::lie::{lift, lift_all, pseudo_distance, GroupElement, GroupTag, LiftedPoint, Point};
use crate::lieconv::{LieConvLayer, LieConvSpec};
use crate::model::{EquivCnp, ModelConfig};

/// Outcome of one property check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub tag: GroupTag,
    pub max_error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_error < self.tolerance
    }
}

pub const LAYER_TOLERANCE: f64 = 1e-6;
pub const DISTANCE_TOLERANCE: f64 = 1e-9;
pub const PERMUTATION_TOLERANCE: f64 = 1e-9;
pub const TRANSLATION_TOLERANCE: f64 = 1e-5;

fn random_points<R: Rng>(tag: GroupTag, n: usize, rng: &mut R) -> Vec<Point<f64>> {
    (0..n)
        .map(|_| {
            let x = rng.random_range(-2.0..2.0);
            let y = if tag == GroupTag::T1 {
                0.0
            } else {
                rng.random_range(-2.0..2.0)
            };
            [x, y]
        })
        .collect()
}

fn layer_output(
    layer: &LieConvLayer,
    store: &ParamStore<f64>,
    pts: &[LiftedPoint<f64>],
    f: &Tensor<f64>,
) -> Result<Tensor<f64>> {
    let tape = Tape::new();
    let geom = layer.geometry(pts, pts, &mut ChaCha8Rng::seed_from_u64(0))?;
    Ok(layer
        .forward(&tape, store, &geom, &tape.constant(f.clone()))?
        .value()
        .clone())
}

/// Largest `|forward(g . inputs) - permuted forward(inputs)|` of a random full
/// LieConv layer over `n_elements` random group elements. The transformed
/// point cloud is also listed in a shuffled order.
pub fn lieconv_equivariance(tag: GroupTag, n_elements: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let mut spec = LieConvSpec::new(tag, 2, 3);
    spec.fraction = 0.3;
    let layer = LieConvLayer::new(&mut store, "conv", spec, &mut rng)?;
    let n = 30;
    let mut worst = 0.0f64;
    for _ in 0..n_elements {
        let xs = random_points(tag, n, &mut rng);
        let pts = lift_all(&xs, tag, 1, &mut rng)?;
        let f = Tensor::new(vec![n, 2], (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let g = GroupElement::random(tag, 2.0, &mut rng);
        let mut moved = Vec::with_capacity(n);
        for (i, p) in pts.iter().enumerate() {
            // SE2 lifts are not unique, so move the lifted element itself
            moved.push(if tag == GroupTag::SE2 {
                p.transformed(&g)?
            } else {
                lift(g.act(xs[i]), tag, 1, i, &mut rng)?.remove(0)
            });
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let shuffled: Vec<_> = perm.iter().map(|&i| moved[i]).collect();
        let a = layer_output(&layer, &store, &pts, &f)?;
        let b = layer_output(&layer, &store, &shuffled, &f)?;
        let c_out = a.shape()[1];
        for (k, &i) in perm.iter().enumerate() {
            for o in 0..c_out {
                let d = (a.data()[i * c_out + o] - b.data()[k * c_out + o]).abs();
                worst = worst.max(d);
            }
        }
    }
    Ok(worst)
}

/// Largest `|d(wu, wv) - d(u, v)|` over random triples.
pub fn distance_invariance(tag: GroupTag, n_triples: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n_triples {
        let u = GroupElement::<f64>::random(tag, 2.0, &mut rng);
        let v = GroupElement::random(tag, 2.0, &mut rng);
        let w = GroupElement::random(tag, 2.0, &mut rng);
        let d0 = pseudo_distance(&u, &v)?;
        let d1 = pseudo_distance(&w.compose(&u)?, &w.compose(&v)?)?;
        worst = worst.max((d0 - d1).abs());
    }
    Ok(worst)
}

/// Largest change of the SO(2) orbit coordinate (the radius) under rotation.
pub fn orbit_preservation(n: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let x = random_points(GroupTag::SO2, 1, &mut rng)[0];
        let g = GroupElement::random(GroupTag::SO2, 2.0, &mut rng);
        let q0 = lift(x, GroupTag::SO2, 1, 0, &mut rng)?[0].q.unwrap_or(0.0);
        let q1 = lift(g.act(x), GroupTag::SO2, 1, 0, &mut rng)?[0].q.unwrap_or(0.0);
        worst = worst.max((q0 - q1).abs() / q0.max(1.0));
    }
    Ok(worst)
}

fn exact_1d_model(seed: u64) -> Result<EquivCnp> {
    let mut cfg = ModelConfig::regress1d();
    cfg.decoder.n_mc = None;
    EquivCnp::new(cfg, seed)
}

/// Largest change of the 1D model's predictive under shuffles of the context.
pub fn predict_permutation_invariance(n_tasks: usize, seed: u64) -> Result<f64> {
    let model = exact_1d_model(seed)?;
    let cfg = TaskConfig1D::new(KernelKind::Rbf);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n_tasks {
        let task = sample_task_1d(&cfg, &mut rng)?;
        let mut perm: Vec<usize> = (0..task.num_context()).collect();
        perm.shuffle(&mut rng);
        let a = model.predict(&task, &mut ChaCha8Rng::seed_from_u64(1))?;
        let b = model.predict(&task.permute_context(&perm), &mut ChaCha8Rng::seed_from_u64(1))?;
        worst = worst.max(a.mu.max_abs_diff(&b.mu)).max(a.sigma.max_abs_diff(&b.sigma));
    }
    Ok(worst)
}

/// Largest change of the 1D model's predictive when the whole task is
/// translated.
pub fn predict_translation_equivariance(n_tasks: usize, seed: u64) -> Result<f64> {
    let model = exact_1d_model(seed)?;
    let cfg = TaskConfig1D::new(KernelKind::Rbf);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n_tasks {
        let task = sample_task_1d(&cfg, &mut rng)?;
        let shift = rng.random_range(-3.0..3.0);
        let a = model.predict(&task, &mut ChaCha8Rng::seed_from_u64(1))?;
        let b = model.predict(&task.translated([shift, 0.0]), &mut ChaCha8Rng::seed_from_u64(1))?;
        worst = worst.max(a.mu.max_abs_diff(&b.mu)).max(a.sigma.max_abs_diff(&b.sigma));
    }
    Ok(worst)
}

/// The full suite for the given groups: layer equivariance and distance
/// invariance per group, the SO(2) orbit check when SO(2) is included, and
/// the model-level checks when T(1) is included.
pub fn run_suite(tags: &[GroupTag], seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for &tag in tags {
        out.push(CheckResult {
            name: "lieconv equivariance",
            tag,
            max_error: lieconv_equivariance(tag, 20, seed)?,
            tolerance: LAYER_TOLERANCE,
        });
        out.push(CheckResult {
            name: "distance invariance",
            tag,
            max_error: distance_invariance(tag, 10_000, seed)?,
            tolerance: DISTANCE_TOLERANCE,
        });
        if tag == GroupTag::SO2 {
            out.push(CheckResult {
                name: "orbit preservation",
                tag,
                max_error: orbit_preservation(1000, seed)?,
                tolerance: 1e-12,
            });
        }
        if tag == GroupTag::T1 {
            out.push(CheckResult {
                name: "predict permutation invariance",
                tag,
                max_error: predict_permutation_invariance(10, seed)?,
                tolerance: PERMUTATION_TOLERANCE,
            });
            out.push(CheckResult {
                name: "predict translation equivariance",
                tag,
                max_error: predict_translation_equivariance(10, seed)?,
                tolerance: TRANSLATION_TOLERANCE,
            });
        }
    }
    Ok(out)
}
