//! Layer primitives with hand-written forward and backward passes:
//! lightweight convolution, dynamic convolution, AdaIN, WadaIN-scaled
//! convolution, plain 1d/2d convolution and average pooling.
//!
//! Conventions shared by every layer here:
//! * cross-correlation (no kernel flip), zero padding at the boundaries;
//! * sequence tensors are `[b, t, c]`, image tensors `[b, h, w, c]`;
//! * `forward_cached` returns the intermediates its `backward` needs;
//!   caches are per-call values owned by the caller;
//! * gradients returned by a backward pass are ordered exactly like the
//!   layer's `params()` listing.

mod activations;
mod conv;
mod dynconv;
mod lconv;
mod norm;
mod wadain;

pub use activations::{
    glu_backward, leaky_relu, leaky_relu_backward, sigmoid_backward, sigmoid_forward,
};
pub use conv::{
    global_avg_pool, global_avg_pool_backward, AvgPool2d, Conv1d, Conv1dCache, Conv1dGrads,
    Conv2d, Conv2dCache, Conv2dGrads,
};
pub use dynconv::{DynConvCache, DynConvGrads, DynConvLayer};
pub use lconv::{LconvCache, LconvGrads, LconvLayer};
pub use norm::{AdaIn, AdaInCache, AdaInGrads, LayerNorm, LayerNormCache, LayerNormGrads};
pub use wadain::{WadaInConv, WadaInConvCache, WadaInConvGrads};

/// Head index of channel `p` when `heads` divides `channels`: channels are
/// split into `heads` contiguous groups that share one kernel.
#[inline]
pub(crate) fn head_of(p: usize, heads: usize, channels: usize) -> usize {
    p * heads / channels
}

/// Left padding that keeps the time extent under a width-`k` kernel.
#[inline]
pub(crate) fn same_pad(k: usize) -> usize {
    (k - 1) / 2
}
