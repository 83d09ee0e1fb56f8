//! Layers with explicit forward/backward passes. Activations are row-major
//! matrices `[rows, features]` where rows are tokens or pixels; every layer
//! returns a context holding what its backward pass needs, and backward
//! accumulates parameter gradients into the `VarStore`.

mod attention;
mod conv;
mod functional;
mod linear;
mod norm;
mod resize;

pub use attention::{AttentionCtx, MultiHeadAttention};
pub use conv::{Conv3x3, Conv3x3Ctx, ConvTranspose2x2, ConvTranspose2x2Ctx};
pub use functional::{
    cross_entropy_masked, gelu, gelu_backward, mse, mse_backward, sigmoid, softmax_rows,
    CrossEntropyOut,
};
pub use linear::{Linear, LinearCtx};
pub use norm::{LayerNorm, LayerNormCtx};
pub use resize::{bilinear_resize, bilinear_resize_backward};
