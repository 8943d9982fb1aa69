//! A small LeNet-style convolutional classifier written against plain
//! slices and a GEMM kernel.
//!
//! Topology: `conv → act → maxpool → conv → act → maxpool → fc → act → fc`,
//! trained with softmax cross-entropy and minibatch SGD. Widths, kernels and
//! pooling are configurable through [`Architecture`]; [`Architecture::lenet`]
//! gives the 20/50/500 LeNet on 60×60×3 inputs.
//!
//! Execution is deterministic for a given seed. Per-sample work may run on
//! rayon workers, but every reduction happens in a fixed order.

pub mod arch;
pub mod checkpoint;
mod error;
mod layers;
mod loss;
mod model;
mod net;
mod params;
mod real;
mod tensor;
pub mod train;

pub use arch::{Activation, Architecture, ConvSpec, ShapeChain};
pub use error::{LeNetError, Result};
pub use loss::{softmax, softmax_cross_entropy};
pub use model::Model;
pub use net::{backward, forward, ForwardCache};
pub use params::{Gradients, Params, PARAM_NAMES};
pub use real::Real;
pub use tensor::Tensor;
pub use train::{
    argmax, batch_gradients, evaluate, lr_schedule, predict, sgd_step, train, train_from,
    EpochRecord, LabeledImages, Precision, Prediction, TrainConfig, TrainLog,
};
