//! Monte Carlo group convolution over lifted point clouds.

mod layer;
mod mlp;
mod neighborhood;

pub use layer::{lieconv_forward, separable_lieconv_forward, LieConvLayer, LieConvSpec};
pub use mlp::{KernelMlp, KernelOutput};
pub use neighborhood::{
    all_neighborhoods, calibrate_radius, fingerprint, mc_subsample, neighborhood, pair_embedding,
    PairGeometry, MAX_CALIBRATION_PAIRS,
};

#[cfg(test)]
mod tests;
