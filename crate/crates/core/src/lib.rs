pub mod autodiff;
pub mod data;
pub mod equivariance;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod lie;
pub mod lieconv;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod scalar;
pub mod task;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision instantiations used by the model and the experiments.
pub type Tensor = autodiff::Tensor<f64>;
pub type Tape = autodiff::Tape<f64>;
pub type Var = autodiff::Var<f64>;
pub type ParamStore = autodiff::ParamStore<f64>;
pub type GroupElement = lie::GroupElement<f64>;
pub type LiftedPoint = lie::LiftedPoint<f64>;
pub type PairGeometry = lieconv::PairGeometry<f64>;
