//! Differentiable operations. Each submodule adds forward methods to
//! [`Graph`](crate::Graph) and provides the matching backward rule.

mod activation;
mod conv;
pub mod loss;
mod norm;
mod pool;
mod shape;

pub use activation::{softmax_channels, LEAKY_SLOPE};
pub use norm::{BatchNormState, BatchStats};

use crate::graph::{Backprop, Op};
use crate::{Scalar, Tensor};

pub(crate) fn backward<T: Scalar>(op: &Op<T>, out: &Tensor<T>, dy: &[T], bp: &mut Backprop<'_, T>) {
    match op {
        Op::Leaf => {}
        Op::Conv1d {
            input,
            weight,
            bias,
            padding,
        } => conv::conv1d_backward(*input, *weight, *bias, *padding, out, dy, bp),
        Op::MaxPool { input, argmax } => pool::maxpool_backward(*input, argmax, dy, bp),
        Op::AvgPool { input, window } => pool::avgpool_backward(*input, *window, dy, bp),
        Op::Upsample { input, factor } => pool::upsample_backward(*input, *factor, out, dy, bp),
        Op::LeakyRelu { input, slope } => activation::leaky_relu_backward(*input, *slope, dy, bp),
        Op::BatchNorm {
            input,
            gamma,
            beta,
            xhat,
            inv_std,
            training,
        } => norm::batchnorm_backward(*input, *gamma, *beta, xhat, inv_std, *training, dy, bp),
        Op::Softmax { input } => activation::softmax_backward(*input, out, dy, bp),
        Op::Dropout { input, mask } => activation::dropout_backward(*input, mask, dy, bp),
        Op::Concat { inputs } => shape::concat_backward(inputs, out, dy, bp),
        Op::GlobalAvgPool { input } => shape::global_avg_pool_backward(*input, dy, bp),
        Op::Linear {
            input,
            weight,
            bias,
        } => shape::linear_backward(*input, *weight, *bias, dy, bp),
        Op::PadEdge { input } => shape::pad_edge_backward(*input, out, dy, bp),
        Op::Slice { input, start } => shape::slice_backward(*input, *start, out, dy, bp),
        Op::FocalLogits {
            logits,
            labels,
            gamma,
        } => loss::focal_logits_backward(*logits, labels, *gamma, dy, bp),
        Op::CrossEntropyLogits { logits, targets } => {
            loss::cross_entropy_logits_backward(*logits, targets, dy, bp)
        }
        Op::Add { a, b } => shape::add_backward(*a, *b, dy, bp),
        Op::Scale { input, factor } => shape::scale_backward(*input, *factor, dy, bp),
        Op::WeightedSum { input, weights } => shape::weighted_sum_backward(*input, weights, dy, bp),
    }
}
