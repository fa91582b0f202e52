//! A small reverse-mode automatic differentiation engine with exactly the
//! layers needed by a 1D U-Net style segmentation network: stride-1
//! convolution, pooling, linear upsampling, batch normalization, leaky ReLU,
//! softmax, dropout, a fully connected layer, focal and cross-entropy losses,
//! Adam with cosine annealing, and a simple checkpoint format.
//!
//! Tensors are dense and row-major. Sequence tensors use the layout
//! `[N, C, L]` (batch, channel, time); `[C, L]` is accepted as a batch of one.

mod checkpoint;
mod error;
pub mod gradcheck;
mod graph;
mod init;
pub mod ops;
mod optim;
mod params;
mod scalar;
mod tensor;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use error::{NnError, Result};
pub use graph::{Graph, Var};
pub use init::he_normal;
pub use ops::loss::{bce_loss, cross_entropy_loss, focal_loss, total_loss, LossConfig, PROB_EPS};
pub use ops::{softmax_channels, BatchNormState, BatchStats, LEAKY_SLOPE};
pub use optim::{adam_step, cosine_lr, Adam, AdamConfig};
pub use params::{Param, ParamId, ParamStore};
pub use scalar::Scalar;
pub use tensor::Tensor;
