//! Dense `f64` kernels with hand-written reverse-mode gradients for the
//! layers of the graph network, plus the NAdam optimizer.

pub mod layers;
pub mod optim;
pub mod tensor;

pub use layers::{
    bce_loss, dense_forward, gcn_backward, gcn_forward, maxpool1d, maxpool1d_backward, sigmoid,
    sort_pooling, sort_pooling_backward, Activation, Conv1d, Dense, LayerParams, BCE_EPS,
};
pub use optim::{NadamConfig, OptimizerState};
pub use tensor::Tensor;
