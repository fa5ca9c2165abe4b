//! Minimal deterministic numerical core.
//!
//! Everything here runs on 64-bit reals in row-major [`Tensor`]s. Layers
//! expose an explicit `forward` returning a cache and a `backward` that
//! consumes it; parameter gradients are written into a gradient container
//! of the same type as the layer (see [`Module`]), so a frozen network can
//! be back-propagated through without touching any of its state.

pub mod activation;
pub mod adamw;
pub mod attention;
pub mod checkpoint;
pub mod dense;
pub mod dropout;
mod error;
pub mod gradcheck;
pub mod module;
pub mod norm;
pub mod prng;
pub mod tensor;

pub use activation::Activation;
pub use adamw::{adamw_step, AdamW, AdamWConfig};
pub use attention::{multihead_attention, AttentionBlock, AttentionCache};
pub use checkpoint::Checkpoint;
pub use dense::{linear_forward, Dense};
pub use dropout::{dropout, Dropout};
pub use error::NumError;
pub use gradcheck::{check_module, grad_check, relative_error, CoordSelection};
pub use module::{param_bytes, zeros_like, Module};
pub use norm::{layer_norm, LayerNorm, NormCache};
pub use prng::Prng;
pub use tensor::Tensor;

pub type Result<T, E = NumError> = std::result::Result<T, E>;
