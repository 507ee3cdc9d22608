//! Tensor substrate, layers with exact backward passes, and the classifier.

mod batchnorm;
mod conv;
mod dense;
pub mod fd;
mod head;
mod loss;
mod model;
mod pool;
mod tensor;
#[cfg(test)]
mod testutil;

pub use batchnorm::{
    batchnorm_backward, batchnorm_train, BatchNorm, BatchNormCache, BatchNormGrads,
};
pub use conv::{conv2d_backward, conv2d_forward, ConvGeometry, ConvGrads};
pub use dense::{
    dense_backward, dense_dropout_backward, dense_dropout_forward, dense_forward, dropout_mask,
    DenseGrads, Mode,
};
pub use head::{temporal_head_backward, temporal_head_forward, HeadCache};
pub use loss::{bce_with_logits, one_hot, sigmoid};
pub use model::{BaseNet, ConvStage, ForwardCache, NetBatch, NetConfig, NetOutput, Subject};
pub use pool::{relu_maxpool_backward, relu_maxpool_forward, PoolCache};
pub use tensor::{matmul, Scalar, Tensor};
