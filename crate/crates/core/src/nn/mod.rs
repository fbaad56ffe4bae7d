//! Dense layers with hand-written reverse-mode gradients.
//!
//! Every layer exposes a `forward` that returns whatever it needs to keep for
//! the backward pass, and a `backward` that accumulates parameter gradients
//! into the [`ParamStore`](crate::params::ParamStore) and returns the gradient
//! with respect to its input.

pub mod activation;
pub mod attention;
pub mod gradcheck;
pub mod linear;
pub mod mlp;
pub mod norm;

pub use activation::{layer_norm, smelu, smelu_grad, softmax};
pub use attention::{AttentionLayerParams, EncoderCache, EncoderLayer, EncoderStack, EncoderStackCache};
pub use gradcheck::{grad_check, GradCheckReport};
pub use linear::Linear;
pub use mlp::{Mlp, MlpCache};
pub use norm::{LayerNorm, LayerNormCache};
