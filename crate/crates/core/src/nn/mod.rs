//! Minimal dense neural-network engine.
//!
//! Layers are evaluated on whole batches (one sample per row). The forward
//! pass records a [`Tape`] which [`Stack::backward`] consumes to produce the
//! gradient of a scalar loss with respect to every trainable parameter.
//! Gradients are written by hand per layer; there is no general autodiff graph.

mod adam;
mod batchnorm;
mod dense;
pub mod gradcheck;
mod stack;

pub use adam::AdamState;
pub use batchnorm::{BatchNormGrad, BatchNormLayer, BnCache};
pub use dense::{Activation, DenseGrad, DenseLayer};
pub use stack::{Layer, LayerGrad, Stack, StackGrads, Tape};

/// Whether a forward pass is part of training (batch statistics, sampling)
/// or inference (running statistics, deterministic).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Mode {
    Train,
    Infer,
}
