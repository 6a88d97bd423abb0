//! Forward and backward kernels for every layer kind, plus the SGD step.

mod activation;
mod conv;
mod gemm;
pub mod gradcheck;
mod linear;
mod loss;
mod pool;
mod sgd;

pub use activation::{relu, relu_backward};
pub use conv::{conv_backward, conv_backward_with, conv_forward, conv_output_size, ConvGrads, ConvParams};
pub use gradcheck::{GradCheck, GradCheckReport};
pub use linear::{fc_backward, fc_forward, FcParams};
pub use loss::{softmax_cross_entropy, LossOutput};
pub use pool::{pool_backward, pool_forward, pool_output_size, PoolIndex};
pub use sgd::sgd_update;
