//! Dense tensors and layers with hand-derived backward passes.
//!
//! Every layer exposes a pure forward function returning its output plus a
//! cache, and a backward function that maps an upstream gradient to parameter
//! gradients (accumulated into a same-typed gradient value) and an input
//! gradient. All arithmetic is f64.

mod activation;
mod blocks;
mod conv;
mod module;
mod norm;
mod tensor;

pub use activation::{
    kink_distance, relu_backward, relu_forward, sigmoid, softmax_backward, softmax_forward,
};
pub use blocks::{
    residual_block_backward, residual_block_forward, Cbam, CbamCache, Rdn, RdnCache, ResBlock,
    ResBlockCache, ResidualCache, SoftmaxCache, SoftmaxLayer,
};
pub(crate) use blocks::add_conv_grads;
pub use conv::{conv2d_backward, conv2d_forward, ConvParams, LayerGrads};
pub use module::Module;
pub(crate) use module::join;
pub use norm::{BatchNorm, NormCache};
pub use tensor::{concat_channels, split_channels, Tensor};

/// Whether normalisation layers use batch statistics or running estimates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
