//! Dense tensors with reverse-mode differentiation, parameter storage, the
//! Adam optimizer and the checkpoint container.

mod adam;
mod checkpoint;
mod ops;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_step, adam_step_store, AdamState};
pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use ops::{sigmoid_scalar, softplus_scalar, Segments};
pub use params::{ParamGrads, ParamId, ParamStore, Parameter};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
