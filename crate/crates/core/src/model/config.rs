use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::GroupTag;

/// Which pathway the model implements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// RBF encoder on targets plus a uniform grid, LieConv stack decoder.
    Regress1d,
    /// LieConv encoder on the pixel lattice, residual separable decoder.
    Image2d,
}

/// Convolution settings shared by one group of layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvSettings {
    pub fraction: f64,
    /// Monte Carlo cap per neighbourhood; `null` keeps full neighbourhoods.
    pub n_mc: Option<usize>,
}

/// Everything needed to rebuild a model; stored as the checkpoint header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub tag: GroupTag,
    pub architecture: Architecture,
    /// Output dimension (colour channels for images).
    pub y_dim: usize,
    /// Degree `K` of the power embedding of outputs.
    pub multiplicity: usize,
    /// Grid points per unit length (1D).
    pub gamma: f64,
    pub sigma_floor: f64,
    /// Map grid outputs to targets through RBF basis functions (1D).
    pub smooth_output: bool,
    pub k_lift: usize,
    pub alpha: f64,
    /// Hidden widths of every kernel MLP.
    pub kernel_hidden: Vec<usize>,
    /// 1D: channel chain of the decoder. 2D: one entry, the residual width.
    pub channels: Vec<usize>,
    pub decoder: ConvSettings,
    /// 2D only: output channels of the encoder convolution (per block).
    pub encoder_channels: usize,
    pub encoder: ConvSettings,
    /// 2D only.
    pub res_blocks: usize,
    /// Initial RBF bandwidth of the 1D encoder.
    pub init_bandwidth: f64,
}

impl ModelConfig {
    /// The 1D regression architecture: four layers [16, 32, 16, 8],
    /// fraction 5/32, 25 Monte Carlo samples.
    pub fn regress1d() -> Self {
        Self {
            tag: GroupTag::T1,
            architecture: Architecture::Regress1d,
            y_dim: 1,
            multiplicity: 1,
            gamma: 16.0,
            sigma_floor: 1e-4,
            smooth_output: false,
            k_lift: 1,
            alpha: 1.0,
            kernel_hidden: vec![32, 32, 32],
            channels: vec![16, 32, 16, 8],
            decoder: ConvSettings {
                fraction: 5.0 / 32.0,
                n_mc: Some(25),
            },
            encoder_channels: 0,
            encoder: ConvSettings {
                fraction: 1.0,
                n_mc: None,
            },
            res_blocks: 0,
            init_bandwidth: 2.0 / 16.0,
        }
    }

    /// The image-completion architecture: 128-channel encoder (fraction 1/10,
    /// 121 samples), four residual blocks of width 128 (fraction 1/15, 81 samples).
    pub fn image2d(tag: GroupTag) -> Self {
        Self {
            tag,
            architecture: Architecture::Image2d,
            y_dim: 1,
            multiplicity: 1,
            gamma: 0.0,
            sigma_floor: 1e-4,
            smooth_output: false,
            k_lift: 1,
            alpha: 1.0,
            kernel_hidden: vec![32, 32, 32],
            channels: vec![128],
            decoder: ConvSettings {
                fraction: 1.0 / 15.0,
                n_mc: Some(81),
            },
            encoder_channels: 128,
            encoder: ConvSettings {
                fraction: 0.1,
                n_mc: Some(121),
            },
            res_blocks: 4,
            init_bandwidth: 0.0,
        }
    }

    /// CPU-sized image model: 16 channels, two residual blocks, 25 samples
    /// per neighbourhood. Same fractions as [`image2d`](Self::image2d).
    pub fn image2d_desk(tag: GroupTag) -> Self {
        Self {
            kernel_hidden: vec![16, 16],
            channels: vec![16],
            decoder: ConvSettings {
                fraction: 1.0 / 15.0,
                n_mc: Some(25),
            },
            encoder_channels: 16,
            encoder: ConvSettings {
                fraction: 0.1,
                n_mc: Some(25),
            },
            res_blocks: 2,
            ..Self::image2d(tag)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.y_dim == 0 {
            return bad("y_dim must be positive".into());
        }
        if self.multiplicity == 0 {
            return bad("multiplicity must be at least 1".into());
        }
        if !(self.sigma_floor > 0.0) {
            return bad(format!("sigma_floor must be positive, got {}", self.sigma_floor));
        }
        if self.k_lift == 0 {
            return bad("k_lift must be at least 1".into());
        }
        if !(self.alpha >= 0.0) {
            return bad(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if self.kernel_hidden.is_empty() || self.kernel_hidden.contains(&0) {
            return bad("kernel_hidden needs positive widths".into());
        }
        if self.channels.is_empty() || self.channels.contains(&0) {
            return bad("channels needs positive widths".into());
        }
        for (name, c) in [("decoder", &self.decoder), ("encoder", &self.encoder)] {
            if !(c.fraction > 0.0 && c.fraction <= 1.0) {
                return bad(format!("{name}.fraction must lie in (0, 1], got {}", c.fraction));
            }
            if c.n_mc == Some(0) {
                return bad(format!("{name}.n_mc must be at least 1"));
            }
        }
        match self.architecture {
            Architecture::Regress1d => {
                if self.tag != GroupTag::T1 {
                    return bad(format!(
                        "the 1D pathway supports the t1 group only, got {}",
                        self.tag
                    ));
                }
                if !(self.gamma > 0.0) {
                    return bad(format!("gamma must be positive, got {}", self.gamma));
                }
                if !(self.init_bandwidth > 0.0) {
                    return bad("init_bandwidth must be positive".into());
                }
            }
            Architecture::Image2d => {
                if self.tag == GroupTag::T1 {
                    return bad("the image pathway needs a planar group".into());
                }
                if self.channels.len() != 1 {
                    return bad("image2d takes a single residual width in channels".into());
                }
                if self.encoder_channels == 0 {
                    return bad("encoder_channels must be positive".into());
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self =
            serde_json::from_str(s).map_err(|e| Error::Config(format!("model config: {e}")))?;
        c.validate()?;
        Ok(c)
    }
}
