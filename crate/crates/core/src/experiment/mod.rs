//! Configured experiments: seeded training and evaluation over task batches.

mod config;
mod eval;
mod train;

pub use config::{DataConfig, DigitsConfig, EvalConfig, ExperimentConfig, TrainConfig, PRESETS};
pub use eval::{evaluate, evaluate_oracle, eval_image_task, eval_task_1d, EvalReport};
pub use train::{train, write_metrics, MetricsRecord, Trained, METRICS_HEADER};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Independent random streams, one per (purpose, index).
pub mod streams {
    pub const TRAIN: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const EVAL: u64 = 3;
    pub const MODEL_INIT: u64 = 4;
}

/// RNG for item `index` of stream `purpose` under `seed`. Results do not
/// depend on which thread consumes the stream.
pub fn stream_rng(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ purpose.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    r.set_stream(index);
    r
}

/// Worker pool sized by `EQUIVCNP_THREADS` (all cores when unset).
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("EQUIVCNP_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("EQUIVCNP_THREADS='{v}' is not a positive integer")))?;
        b = b.num_threads(n);
    }
    b.build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Mean and population standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}
