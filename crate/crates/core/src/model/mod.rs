//! The EquivCNP model: functional-embedding encoder, LieConv decoder and
//! Gaussian predictive head, for 1D regression and image completion.

mod config;
mod encoder;
mod net;

pub use config::{Architecture, ConvSettings, ModelConfig};
pub use encoder::{encode_image, make_grid, phi_embed, rbf_psi, RbfPsi};
pub use net::{nll_loss, EquivCnp, PredictiveDistribution};
