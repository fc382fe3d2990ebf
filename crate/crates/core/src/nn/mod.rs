//! Minimal differentiable building blocks for the video transformer.

mod attention;
mod block;
mod layers;
pub mod ops;
mod tensor;

pub use attention::{Attention, AttentionCache, AttentionPattern};
pub use block::{Block, BlockCache, Dropout};
pub(crate) use layers::join;
pub use layers::{
    apply_mask, dropout_mask, gelu, gelu_backward, LayerNorm, LayerNormCache, Linear, ParamGroup, LAYER_NORM_EPS,
};
pub use tensor::Tensor;
