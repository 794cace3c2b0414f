//! Dense, convolution and normalisation kernels with reverse-mode gradients
//! and an Adam optimizer.

mod graph;
mod gradcheck;
pub mod kernels;
mod params;
mod tensor;

pub use graph::{Graph, Var};
pub use gradcheck::{grad_check, GRAD_CHECK_FLOOR, GRAD_CHECK_STEP};
pub use kernels::{
    conv_pool_forward, layer_norm, residual_wrap, Activation, ConvKernel, Padding,
};
pub use params::{adam_update, Adam, Param, ParamId, ParamStore, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use tensor::Tensor2;
