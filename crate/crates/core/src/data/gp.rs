use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_jittered, solve_lower};
use crate::task::TaskSet;

/// Stationary covariance family with unit lengthscale and unit variance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rbf,
    Matern52,
    Periodic,
}

impl KernelKind {
    pub const ALL: [KernelKind; 3] = [KernelKind::Rbf, KernelKind::Matern52, KernelKind::Periodic];
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Rbf => "rbf",
            KernelKind::Matern52 => "matern52",
            KernelKind::Periodic => "periodic",
        })
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rbf" => Ok(KernelKind::Rbf),
            "matern52" | "matern" => Ok(KernelKind::Matern52),
            "periodic" => Ok(KernelKind::Periodic),
            _ => Err(Error::Config(format!("unknown kernel '{s}'"))),
        }
    }
}

/// Default diagonal jitter; also the first value tried when factorising.
pub const DEFAULT_JITTER: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub kind: KernelKind,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

fn default_jitter() -> f64 {
    DEFAULT_JITTER
}

impl KernelSpec {
    pub fn new(kind: KernelKind) -> Self {
        Self {
            kind,
            jitter: DEFAULT_JITTER,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.jitter > 0.0 && self.jitter.is_finite()) {
            return Err(Error::Config(format!(
                "kernel jitter must be positive, got {}",
                self.jitter
            )));
        }
        Ok(())
    }

    /// Covariance matrix `K(a, b)`, row-major `|a| x |b|`, without jitter.
    pub fn matrix(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter()
            .flat_map(|&x| b.iter().map(move |&y| kernel_eval(self, x, y)))
            .collect()
    }
}

/// `k(x1, x2)` for the configured family:
/// RBF `exp(-d^2 / 2)`, Matern-5/2 `(1 + sqrt5 d + 5/3 d^2) exp(-sqrt5 d)`,
/// periodic `exp(-2 sin^2(pi d))`.
pub fn kernel_eval(spec: &KernelSpec, x1: f64, x2: f64) -> f64 {
    let d = (x1 - x2).abs();
    match spec.kind {
        KernelKind::Rbf => (-0.5 * d * d).exp(),
        KernelKind::Matern52 => {
            let s = 5f64.sqrt() * d;
            (1.0 + s + s * s / 3.0) * (-s).exp()
        }
        KernelKind::Periodic => {
            let s = (PI * d).sin();
            (-2.0 * s * s).exp()
        }
    }
}

/// One zero-mean draw of the GP at `xs`.
///
/// The draw is made on the sorted, deduplicated locations and scattered back,
/// so permuting `xs` permutes the output and repeated locations share a value.
pub fn gp_sample<R: Rng + ?Sized>(spec: &KernelSpec, xs: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    spec.validate()?;
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("GP locations must be finite".into()));
    }
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut unique: Vec<f64> = Vec::with_capacity(xs.len());
    let mut slot = vec![0usize; xs.len()];
    for &i in &order {
        if unique.last() != Some(&xs[i]) {
            unique.push(xs[i]);
        }
        slot[i] = unique.len() - 1;
    }
    let n = unique.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let k = spec.matrix(&unique, &unique);
    let (l, _) = cholesky_jittered(&k, n, spec.jitter)?;
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let ys: Vec<f64> = (0..n)
        .map(|i| (0..=i).map(|j| l[i * n + j] * z[j]).sum())
        .collect();
    Ok(slot.iter().map(|&s| ys[s]).collect())
}

/// Draws `f(new)` given noisy-at-jitter observations `f(xs) = ys` of the same
/// GP draw. Joint with the observations this is distributed like
/// [`gp_sample`] over `xs ++ new`.
pub fn gp_conditional_sample<R: Rng + ?Sized>(
    spec: &KernelSpec,
    xs: &[f64],
    ys: &[f64],
    new: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    spec.validate()?;
    if xs.len() != ys.len() {
        return Err(Error::Contract(format!(
            "{} locations but {} values",
            xs.len(),
            ys.len()
        )));
    }
    if xs.is_empty() {
        return gp_sample(spec, new, rng);
    }
    let (n, m) = (xs.len(), new.len());
    if m == 0 {
        return Ok(Vec::new());
    }
    let (l, _) = cholesky_jittered(&spec.matrix(xs, xs), n, spec.jitter)?;
    let cross = spec.matrix(xs, new);
    // columns of L^-1 K(xs, new)
    let a: Vec<Vec<f64>> = (0..m)
        .map(|j| solve_lower(&l, n, &(0..n).map(|i| cross[i * m + j]).collect::<Vec<_>>()))
        .collect();
    let b = solve_lower(&l, n, ys);
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).sum::<f64>();
    let mean: Vec<f64> = a.iter().map(|c| dot(c, &b)).collect();
    let mut cov = spec.matrix(new, new);
    for i in 0..m {
        for j in 0..m {
            cov[i * m + j] -= dot(&a[i], &a[j]);
        }
    }
    let (lc, _) = cholesky_jittered(&cov, m, spec.jitter)?;
    let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    Ok((0..m)
        .map(|i| mean[i] + (0..=i).map(|j| lc[i * m + j] * z[j]).sum::<f64>())
        .collect())
}

/// Generator settings for one-dimensional regression tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig1D {
    pub x_range: [f64; 2],
    pub n_context_range: [usize; 2],
    pub n_target_range: [usize; 2],
    pub kernel: KernelSpec,
}

impl TaskConfig1D {
    pub fn new(kind: KernelKind) -> Self {
        Self {
            x_range: [-2.0, 2.0],
            n_context_range: [3, 50],
            n_target_range: [3, 50],
            kernel: KernelSpec::new(kind),
        }
    }

    /// Same counts and kernel, observations spread over `[-4, 4]`.
    pub fn extrapolation(&self) -> Self {
        Self {
            x_range: [-4.0, 4.0],
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        let [lo, hi] = self.x_range;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!("x_range [{lo}, {hi}] is empty")));
        }
        for (name, [a, b]) in [
            ("n_context_range", self.n_context_range),
            ("n_target_range", self.n_target_range),
        ] {
            if a == 0 || a > b {
                return Err(Error::Config(format!("{name} [{a}, {b}] must satisfy 1 <= lo <= hi")));
            }
        }
        Ok(())
    }
}

/// Draws a task: counts, uniform locations, then one joint function sample
/// shared by context and targets.
pub fn sample_task_1d<R: Rng + ?Sized>(cfg: &TaskConfig1D, rng: &mut R) -> Result<TaskSet> {
    cfg.validate()?;
    let nc = rng.random_range(cfg.n_context_range[0]..=cfg.n_context_range[1]);
    let nt = rng.random_range(cfg.n_target_range[0]..=cfg.n_target_range[1]);
    let [lo, hi] = cfg.x_range;
    let xs: Vec<f64> = (0..nc + nt).map(|_| rng.random_range(lo..hi)).collect();
    task_from_locations(&cfg.kernel, &xs[..nc], &xs[nc..], rng)
}

/// Extends a task drawn from `cfg` to the wider range `wide`: extra context
/// and target locations are drawn uniformly on `wide` minus `cfg.x_range`, at
/// the task's own density, and their values come from the same function
/// (conditioned on the existing points, which are kept unchanged).
pub fn extend_task_1d<R: Rng + ?Sized>(
    cfg: &TaskConfig1D,
    task: &TaskSet,
    wide: [f64; 2],
    rng: &mut R,
) -> Result<TaskSet> {
    let [lo, hi] = cfg.x_range;
    if !(wide[0] <= lo && hi <= wide[1]) {
        return Err(Error::Config(format!(
            "range [{}, {}] does not contain [{lo}, {hi}]",
            wide[0], wide[1]
        )));
    }
    let target_y = task
        .target_y
        .as_ref()
        .ok_or_else(|| Error::Contract("extending a task needs its target values".into()))?;
    let left = lo - wide[0];
    let outside = left + (wide[1] - hi);
    let ratio = outside / (hi - lo);
    let mut draw = |count: usize| -> Vec<f64> {
        let k = (count as f64 * ratio).round() as usize;
        (0..k)
            .map(|_| {
                let u = rng.random_range(0.0..outside);
                if u < left {
                    wide[0] + u
                } else {
                    hi + (u - left)
                }
            })
            .collect()
    };
    let extra_c = if outside > 0.0 { draw(task.num_context()) } else { Vec::new() };
    let extra_t = if outside > 0.0 { draw(task.num_targets()) } else { Vec::new() };
    let xs: Vec<f64> = task.context_x.iter().chain(&task.target_x).map(|p| p[0]).collect();
    let ys: Vec<f64> = task.context_y.iter().chain(target_y).copied().collect();
    let new: Vec<f64> = extra_c.iter().chain(&extra_t).copied().collect();
    let vals = gp_conditional_sample(&cfg.kernel, &xs, &ys, &new, rng)?;
    let point = |x: &f64| [*x, 0.0];
    let mut context_x = task.context_x.clone();
    context_x.extend(extra_c.iter().map(point));
    let mut context_y = task.context_y.clone();
    context_y.extend_from_slice(&vals[..extra_c.len()]);
    let mut tx = task.target_x.clone();
    tx.extend(extra_t.iter().map(point));
    let mut ty = target_y.clone();
    ty.extend_from_slice(&vals[extra_c.len()..]);
    TaskSet::new(1, context_x, context_y, tx, Some(ty))
}

/// Samples one function at `context ++ targets` and packages the split.
pub fn task_from_locations<R: Rng + ?Sized>(
    kernel: &KernelSpec,
    context: &[f64],
    targets: &[f64],
    rng: &mut R,
) -> Result<TaskSet> {
    let xs: Vec<f64> = context.iter().chain(targets).copied().collect();
    let ys = gp_sample(kernel, &xs, rng)?;
    let nc = context.len();
    TaskSet::new(
        1,
        context.iter().map(|&x| [x, 0.0]).collect(),
        ys[..nc].to_vec(),
        targets.iter().map(|&x| [x, 0.0]).collect(),
        Some(ys[nc..].to_vec()),
    )
}
