//! Differentiable building blocks with hand-written backward passes.
//!
//! Layers are exposed as pure forward functions plus matching backward
//! functions that accumulate into parameter gradients. Forward passes never
//! mutate parameters, so frozen weights can serve inference from many threads.

mod gradcheck;
mod init;
mod layers;
mod loss;
mod optim;
mod tensor;

pub use gradcheck::{finite_difference_check, GradCheckConfig, GradCheckReport, Objective};
pub use init::{glorot_uniform, uniform};
pub use layers::{
    concat_features, conv1d_backward, conv1d_forward, dense_backward, dense_forward, dropout,
    dropout_backward, embedding_backward, embedding_forward, max_pool_backward,
    max_pool_over_time, relu, relu_backward, split_features, Conv1d, Dense, DropoutMask,
    Embedding, PoolIndices,
};
pub use loss::{cross_entropy_loss, one_hot, softmax, softmax_cross_entropy_grad, PROB_FLOOR};
pub use optim::{Optimizer, OptimizerSpec};
pub use tensor::{IdBatch, Parameter, Tensor};
