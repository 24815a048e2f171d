//! Minimal dense-tensor math with reverse-mode gradients.
//!
//! Everything the document classifier, the entity tagger and the relation
//! classifier need: a [`Graph`] tape over [`Tensor`]s, dense/LSTM/BiLSTM
//! layers, 1-D convolution with max-over-time pooling, batch norm,
//! dropout, softmax cross-entropy and [`Adam`] with per-epoch decay.
//!
//! All code is generic over [`Scalar`] so the `f32` training path can be
//! re-run in `f64` for finite-difference checks.

mod error;
pub mod gradcheck;
mod graph;
pub mod layers;
mod optim;
mod params;
mod tensor;

pub use error::{NnError, Result};
pub use graph::{softmax_in_place, BatchMoments, Graph, Var};
pub use layers::{Activation, LstmWeights, Mode};
pub use optim::{Adam, TrainConfig, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use params::{uniform, xavier_uniform, Bound, Grads, ParamSet};
pub use tensor::{Scalar, Tensor};
