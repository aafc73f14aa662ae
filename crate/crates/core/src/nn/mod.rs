//! Small deterministic tensor engine for 1-D convolutional networks.

pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
pub mod tensor;

pub use layers::{LayerSpec, Mode};
pub use model::{Buffer, Model, ModelBuilder, Node, Parameter};
pub use tensor::{Scalar, Tensor};
