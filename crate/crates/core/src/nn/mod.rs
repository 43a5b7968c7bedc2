//! Dense feed-forward networks with concrete and interval forward passes and
//! hand-written reverse-mode gradients for both.

mod adam;
pub mod checkpoint;
mod grad;
mod mlp;

pub use adam::{Adam, AdamConfig};
pub use grad::{LayerGradient, ParamGradient};
pub use mlp::{Activation, Layer, Mlp};
