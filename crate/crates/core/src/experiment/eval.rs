use rand::Rng;
use rayon::prelude::*;

use super::config::{DataConfig, ExperimentConfig};
use super::{mean_std, stream_rng, streams, worker_pool};
use crate::data::{
    extend_task_1d, image_task_with_rate, random_transform, render_digit, sample_image_task,
    sample_task_1d,
    transform_image, DigitImage,
};
use crate::error::{Error, Result};
use crate::model::EquivCnp;
use crate::oracle::oracle_log_likelihood;
use crate::task::{ImageObservation, TaskSet};

/// Per-task log-likelihoods (each the mean over that task's targets).
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub per_task: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl EvalReport {
    pub fn new(per_task: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&per_task);
        Self {
            per_task,
            mean,
            std,
        }
    }
}

/// Evaluation task `index` of a GP experiment together with the RNG used to
/// draw it (the model consumes the rest of the stream). In extrapolation mode
/// the in-range task of the same index is extended over the wider range, so
/// both modes share their in-range points and function values.
pub fn eval_task_1d(cfg: &ExperimentConfig, index: u64) -> Result<(TaskSet, impl Rng)> {
    let DataConfig::Gp(gp) = &cfg.data else {
        return Err(Error::Config("experiment does not use GP data".into()));
    };
    let mut rng = stream_rng(cfg.eval.seed, streams::EVAL, index);
    let mut task = sample_task_1d(gp, &mut rng)?;
    if cfg.eval.extrapolation {
        task = extend_task_1d(gp, &task, gp.extrapolation().x_range, &mut rng)?;
    }
    Ok((task, rng))
}

/// Evaluation image `index`: labels are cycled, each image gets a random
/// test transform and a mask at a configured (cycled) or random rate.
pub fn eval_image_task(
    cfg: &ExperimentConfig,
    index: u64,
) -> Result<(DigitImage, ImageObservation, impl Rng)> {
    let DataConfig::Digits(d) = &cfg.data else {
        return Err(Error::Config("experiment does not use digit data".into()));
    };
    let mut rng = stream_rng(cfg.eval.seed, streams::EVAL, index);
    let n = d.labels.len() as u64;
    let base = render_digit(d.labels[(index % n) as usize])?;
    let (scale, angle) = random_transform(cfg.eval.transform, &mut rng);
    let img = transform_image(&base, scale, angle)?;
    let fr = &cfg.eval.mask_fractions;
    let obs = if fr.is_empty() {
        sample_image_task(&img, &mut rng)?
    } else {
        image_task_with_rate(&img, fr[((index / n) as usize) % fr.len()], &mut rng)?
    };
    Ok((img, obs, rng))
}

/// Mean and spread of the model's per-task log-likelihood over
/// `cfg.eval.n_tasks` seeded tasks.
pub fn evaluate(model: &EquivCnp, cfg: &ExperimentConfig) -> Result<EvalReport> {
    if model.config.architecture != cfg.model.architecture || model.config.tag != cfg.model.tag {
        return Err(Error::Config(format!(
            "checkpoint is a {:?}/{} model, config describes {:?}/{}",
            model.config.architecture, model.config.tag, cfg.model.architecture, cfg.model.tag
        )));
    }
    let pool = worker_pool()?;
    let lls: Vec<Result<f64>> = pool.install(|| {
        (0..cfg.eval.n_tasks as u64)
            .into_par_iter()
            .map(|i| match &cfg.data {
                DataConfig::Gp(_) => {
                    let (task, mut rng) = eval_task_1d(cfg, i)?;
                    model.task_log_likelihood(&task, &mut rng)
                }
                DataConfig::Digits(_) => {
                    let (_, obs, mut rng) = eval_image_task(cfg, i)?;
                    model.image_log_likelihood(&obs, &mut rng)
                }
            })
            .collect()
    });
    Ok(EvalReport::new(lls.into_iter().collect::<Result<_>>()?))
}

/// The exact GP predictor on the same tasks as [`evaluate`].
pub fn evaluate_oracle(cfg: &ExperimentConfig) -> Result<EvalReport> {
    let DataConfig::Gp(gp) = &cfg.data else {
        return Err(Error::Config("the GP oracle needs GP data".into()));
    };
    let pool = worker_pool()?;
    let lls: Vec<Result<f64>> = pool.install(|| {
        (0..cfg.eval.n_tasks as u64)
            .into_par_iter()
            .map(|i| oracle_log_likelihood(&gp.kernel, &eval_task_1d(cfg, i)?.0))
            .collect()
    });
    Ok(EvalReport::new(lls.into_iter().collect::<Result<_>>()?))
}
