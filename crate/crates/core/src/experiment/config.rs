use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{KernelKind, TaskConfig1D, TransformMode};
use crate::error::{Error, Result};
use crate::lie::GroupTag;
use crate::model::{Architecture, ModelConfig};

/// Digit-completion training data: untransformed glyphs with fresh masks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DigitsConfig {
    pub labels: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataConfig {
    Gp(TaskConfig1D),
    Digits(DigitsConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub n_tasks: usize,
    /// 1D: draw evaluation observations from `[-4, 4]`.
    pub extrapolation: bool,
    /// 2D: fixed context rates cycled over tasks; empty draws `U(0.01, 0.5)`.
    pub mask_fractions: Vec<f64>,
    /// 2D: test-time transforms.
    pub transform: TransformMode,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

/// Names accepted by [`ExperimentConfig::preset`].
pub const PRESETS: [&str; 4] = ["regress1d", "regress1d-desk", "image2d", "image2d-desk"];

impl ExperimentConfig {
    /// A named preset. 1D presets use the RBF kernel, image presets RxSO2;
    /// both can be edited afterwards.
    pub fn preset(name: &str) -> Result<Self> {
        let gp = |epochs, batches| Self {
            model: ModelConfig::regress1d(),
            data: DataConfig::Gp(TaskConfig1D::new(KernelKind::Rbf)),
            train: TrainConfig {
                epochs,
                batches_per_epoch: batches,
                batch_size: 16,
                lr: 1e-3,
                seed: 0,
            },
            eval: EvalConfig {
                n_tasks: 1000,
                extrapolation: false,
                mask_fractions: Vec::new(),
                transform: TransformMode::None,
                seed: 1,
            },
        };
        let digits = |model: ModelConfig, epochs, batches| Self {
            model,
            data: DataConfig::Digits(DigitsConfig {
                labels: (0..10).collect(),
            }),
            train: TrainConfig {
                epochs,
                batches_per_epoch: batches,
                batch_size: 4,
                lr: 1e-3,
                seed: 0,
            },
            eval: EvalConfig {
                n_tasks: 1000,
                extrapolation: false,
                mask_fractions: Vec::new(),
                transform: TransformMode::Both,
                seed: 1,
            },
        };
        match name {
            "regress1d" => Ok(gp(200, 256)),
            "regress1d-desk" => Ok(gp(30, 64)),
            "image2d" => Ok(digits(ModelConfig::image2d(GroupTag::RxSO2), 100, 3)),
            "image2d-desk" => {
                let mut c = digits(ModelConfig::image2d_desk(GroupTag::RxSO2), 20, 5);
                c.eval.n_tasks = 200;
                c.eval.transform = TransformMode::Scale;
                Ok(c)
            }
            _ => Err(Error::Config(format!(
                "unknown preset '{name}', expected one of {}",
                PRESETS.join(", ")
            ))),
        }
    }

    /// Switches the group of the model (image presets).
    pub fn with_group(mut self, tag: GroupTag) -> Result<Self> {
        self.model.tag = tag;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        match (&self.data, self.model.architecture) {
            (DataConfig::Gp(t), Architecture::Regress1d) => {
                t.validate()?;
                if self.model.y_dim != 1 {
                    return bad("GP tasks have one output dimension".into());
                }
            }
            (DataConfig::Digits(d), Architecture::Image2d) => {
                if d.labels.is_empty() || d.labels.iter().any(|&l| l > 9) {
                    return bad("digits.labels must be a nonempty list of 0..=9".into());
                }
                if self.model.y_dim != 1 {
                    return bad("digit images have one channel".into());
                }
            }
            (DataConfig::Gp(_), _) => return bad("gp data needs the regress1d architecture".into()),
            (DataConfig::Digits(_), _) => {
                return bad("digits data needs the image2d architecture".into())
            }
        }
        let t = &self.train;
        if t.epochs == 0 || t.batches_per_epoch == 0 || t.batch_size == 0 {
            return bad("train.epochs, batches_per_epoch and batch_size must be positive".into());
        }
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return bad(format!("train.lr must be positive, got {}", t.lr));
        }
        if self.eval.n_tasks == 0 {
            return bad("eval.n_tasks must be positive".into());
        }
        if let Some(f) = self.eval.mask_fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return bad(format!("mask fraction {f} is not in (0, 1]"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}
