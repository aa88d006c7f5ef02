use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::RngCore;
use rayon::prelude::*;

use super::config::{DataConfig, ExperimentConfig};
use super::{mean_std, stream_rng, streams, worker_pool};
use crate::autodiff::{adam_step_store, AdamState, ParamGrads, Tape};
use crate::data::{render_digit, sample_image_task, sample_task_1d, DigitImage};
use crate::error::{Error, Result};
use crate::model::EquivCnp;

pub const METRICS_HEADER: &str = "epoch,mean_ll,std_ll,wall_seconds,seed";

/// Training log-likelihood summary of one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub mean_ll: f64,
    pub std_ll: f64,
    pub wall_seconds: f64,
    pub seed: u64,
}

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.3},{}",
            self.epoch, self.mean_ll, self.std_ll, self.wall_seconds, self.seed
        )
    }
}

pub fn write_metrics(path: impl AsRef<Path>, records: &[MetricsRecord]) -> Result<()> {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub struct Trained {
    pub model: EquivCnp,
    pub metrics: Vec<MetricsRecord>,
}

/// One item's loss value and gradients.
fn item_gradients(
    model: &EquivCnp,
    data: &DataConfig,
    digits: &[DigitImage],
    seed: u64,
    index: u64,
) -> Result<(f64, ParamGrads<f64>)> {
    let mut rng = stream_rng(seed, streams::TRAIN, index);
    let tape = Tape::new();
    let loss = match data {
        DataConfig::Gp(cfg) => {
            let task = sample_task_1d(cfg, &mut rng)?;
            model.task_loss(&tape, &task, &mut rng)?
        }
        DataConfig::Digits(_) => {
            let img = &digits[index as usize % digits.len()];
            let obs = sample_image_task(img, &mut rng)?;
            model.image_loss(&tape, &obs, &mut rng)?
        }
    };
    let value = loss.value().item();
    if !value.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {value} at item {index}")));
    }
    let grads = tape.backward(&loss)?.param_grads(&model.params);
    Ok((-value, grads))
}

/// Trains from `cfg`, calling `on_epoch` after every epoch. When `out_dir` is
/// set, `checkpoint.bin` and `metrics.csv` there are rewritten every epoch.
///
/// Items are drawn from per-item streams and their gradients are summed in
/// item order, so results do not depend on the number of worker threads.
pub fn train(
    cfg: &ExperimentConfig,
    out_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&MetricsRecord),
) -> Result<Trained> {
    cfg.validate()?;
    let seed = cfg.train.seed;
    let pool = worker_pool()?;
    let mut model = EquivCnp::new(cfg.model.clone(), stream_rng(seed, streams::MODEL_INIT, 0).next_u64())?;
    let mut adam = AdamState::for_store(cfg.train.lr, &model.params);
    let labels = match &cfg.data {
        DataConfig::Digits(d) => d.labels.clone(),
        DataConfig::Gp(_) => Vec::new(),
    };
    let base_digits: Vec<DigitImage> = labels
        .iter()
        .map(|&l| render_digit(l))
        .collect::<Result<_>>()?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        cfg.save(dir.join("config.json"))?;
    }
    let start = Instant::now();
    let mut metrics = Vec::with_capacity(cfg.train.epochs);
    let per_epoch = (cfg.train.batches_per_epoch * cfg.train.batch_size) as u64;
    for epoch in 0..cfg.train.epochs {
        // digit order is reshuffled each epoch and cycled over its items
        let mut digits = base_digits.clone();
        digits.shuffle(&mut stream_rng(seed, streams::SHUFFLE, epoch as u64));
        let mut lls = Vec::with_capacity(per_epoch as usize);
        for b in 0..cfg.train.batches_per_epoch {
            let first = epoch as u64 * per_epoch + (b * cfg.train.batch_size) as u64;
            let indices: Vec<u64> = (first..first + cfg.train.batch_size as u64).collect();
            let results: Vec<Result<(f64, ParamGrads<f64>)>> = pool.install(|| {
                indices
                    .par_iter()
                    .map(|&i| item_gradients(&model, &cfg.data, &digits, seed, i))
                    .collect()
            });
            let mut total = ParamGrads::empty(model.params.len());
            for r in results {
                let (ll, g) = r?;
                lls.push(ll);
                total.merge(g)?;
            }
            total.scale(1.0 / cfg.train.batch_size as f64);
            model.params.zero_grads();
            model.params.accumulate(&total)?;
            adam_step_store(&mut model.params, &mut adam)?;
        }
        let (mean_ll, std_ll) = mean_std(&lls);
        let record = MetricsRecord {
            epoch: epoch + 1,
            mean_ll,
            std_ll,
            wall_seconds: start.elapsed().as_secs_f64(),
            seed,
        };
        if let Some(dir) = out_dir {
            model.save(dir.join("checkpoint.bin"))?;
            let path = dir.join("metrics.csv");
            let mut f = if epoch == 0 {
                let mut f = std::fs::File::create(&path)?;
                writeln!(f, "{METRICS_HEADER}")?;
                f
            } else {
                std::fs::OpenOptions::new().append(true).open(&path)?
            };
            writeln!(f, "{}", record.csv_row())?;
        }
        on_epoch(&record);
        metrics.push(record);
    }
    Ok(Trained { model, metrics })
}
