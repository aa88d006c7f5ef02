//! Exact noiseless GP posterior: the Bayes predictor for tasks drawn from a
//! known kernel.

use std::f64::consts::PI;

use crate::data::KernelSpec;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_jittered, solve_lower, solve_upper_transposed};
use crate::task::TaskSet;

#[derive(Clone, Debug, PartialEq)]
pub struct GpPosterior {
    pub mu: Vec<f64>,
    /// Marginal variances, clamped at zero.
    pub var: Vec<f64>,
    pub kernel: KernelSpec,
}

/// Posterior marginals at `targets` given noiseless observations
/// `(context_x, context_y)`, using `K + jitter I` for the context covariance.
pub fn gp_posterior(
    spec: &KernelSpec,
    context_x: &[f64],
    context_y: &[f64],
    targets: &[f64],
) -> Result<GpPosterior> {
    spec.validate()?;
    if context_x.len() != context_y.len() {
        return Err(Error::Dimension(format!(
            "{} context locations and {} outputs",
            context_x.len(),
            context_y.len()
        )));
    }
    let n = context_x.len();
    if n == 0 {
        return Ok(GpPosterior {
            mu: vec![0.0; targets.len()],
            var: targets
                .iter()
                .map(|&t| crate::data::kernel_eval(spec, t, t))
                .collect(),
            kernel: *spec,
        });
    }
    let k = spec.matrix(context_x, context_x);
    let (l, _) = cholesky_jittered(&k, n, spec.jitter)?;
    let alpha = solve_upper_transposed(&l, n, &solve_lower(&l, n, context_y));
    let mut mu = Vec::with_capacity(targets.len());
    let mut var = Vec::with_capacity(targets.len());
    for &t in targets {
        let ks = spec.matrix(context_x, &[t]);
        mu.push(ks.iter().zip(&alpha).map(|(a, b)| a * b).sum());
        let v = solve_lower(&l, n, &ks);
        let prior = crate::data::kernel_eval(spec, t, t);
        var.push((prior - v.iter().map(|x| x * x).sum::<f64>()).max(0.0));
    }
    Ok(GpPosterior {
        mu,
        var,
        kernel: *spec,
    })
}

/// `log N(y; mu, var)`.
pub fn gaussian_log_density(y: f64, mu: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * PI * var).ln() + (y - mu).powi(2) / var)
}

/// Per-target log-likelihoods under the posterior, with `jitter` added to each
/// predictive variance.
pub fn oracle_target_log_likelihoods(spec: &KernelSpec, task: &TaskSet) -> Result<Vec<f64>> {
    if task.y_dim != 1 {
        return Err(Error::Contract("the GP oracle handles single-output tasks".into()));
    }
    let ty = task
        .target_y
        .as_ref()
        .ok_or_else(|| Error::Contract("oracle likelihood needs target outputs".into()))?;
    let cx: Vec<f64> = task.context_x.iter().map(|p| p[0]).collect();
    let tx: Vec<f64> = task.target_x.iter().map(|p| p[0]).collect();
    let post = gp_posterior(spec, &cx, &task.context_y, &tx)?;
    Ok(ty
        .iter()
        .zip(post.mu.iter().zip(&post.var))
        .map(|(&y, (&m, &v))| gaussian_log_density(y, m, v + spec.jitter))
        .collect())
}

/// Mean over targets of the predictive log-likelihood.
pub fn oracle_log_likelihood(spec: &KernelSpec, task: &TaskSet) -> Result<f64> {
    let ll = oracle_target_log_likelihoods(spec, task)?;
    if ll.is_empty() {
        return Err(Error::Contract("task has no targets".into()));
    }
    Ok(ll.iter().sum::<f64>() / ll.len() as f64)
}
