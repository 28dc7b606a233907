//! A small CPU tensor engine: NCHW `f32` tensors, a reverse-mode autodiff
//! tape, the layers a convolutional encoder-decoder needs, and SGD.

pub mod error;
pub mod graph;
pub mod kernels;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tensor;

pub use error::NnError;
pub use graph::{normalize_pair, sigmoid, BufferUpdate, Gradients, Graph, Mode, Var};
pub use kernels::conv::ConvGeometry;
pub use layers::{BatchNorm2d, Conv2d, ConvBn};
pub use optim::Sgd;
pub use params::{BufferId, Init, Param, ParamId, ParamStore};
pub use tensor::{Shape, Tensor};
