//! Minimal batch-oriented layer stack with explicit forward caches and
//! hand-written backward passes.
//!
//! Tensors are `ndarray` arrays in `[N, C, H, W]` layout. Every layer is
//! deterministic: reductions over the batch run in index order, so repeated
//! runs produce bit-identical results regardless of thread scheduling.

mod conv;
mod norm;
mod ops;
mod param;

pub use conv::Conv2d;
pub use norm::{BatchNorm2d, BnCache};
pub use ops::{
    concat_channels, split_channels_grad, LeakyRelu, MaxPool2x2, PoolCache, UpsampleNearest2x,
};
pub use param::Param;
