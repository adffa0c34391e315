//! Minimal differentiable layers with hand-written backward passes.
//!
//! Every layer is generic over [`Scalar`] so the same code trains in `f32`
//! and is verified against finite differences in `f64`.

mod activation;
mod adam;
pub mod checkpoint;
mod conv;
mod dense;
mod dropout;
mod embedding;
pub mod gradcheck;
pub mod loss;
mod lstm;
mod mlp;
mod param;
mod rng;
mod scalar;
mod tensor;

use thiserror::Error;

pub use activation::{sigmoid, Activation};
pub use adam::Adam;
pub use checkpoint::Checkpoint;
pub use conv::{Conv2d, ConvCache};
pub use dense::{Dense, DenseCache};
pub use dropout::{dropout, dropout_backward, Mode};
pub use embedding::Embedding;
pub use loss::{cross_entropy, mse, softmax, softmax_cross_entropy_grad};
pub use lstm::{Lstm, LstmCell, LstmOutput, LstmSequenceCache, LstmStepCache};
pub use mlp::Mlp;
pub use param::{prefixed, prefixed_mut, Param, Parameterized};
pub use rng::Rng;
pub use scalar::{DType, Scalar};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("dropout probability must be in [0, 1), got {0}")]
    InvalidP(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
