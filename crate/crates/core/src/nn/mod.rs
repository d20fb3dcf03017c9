//! Minimal dense-network substrate shared by every learned model.

pub mod gradcheck;
mod layers;
mod optim;
mod tape;
mod tensor;

pub use layers::{activate, activate_scalar, Activation, Linear, Mlp, Mode};
pub use optim::Adam;
pub use tape::{sigmoid, Adjacency, Gradients, Param, ParamId, ParamStore, Tape, Var};
pub use tensor::Tensor;
