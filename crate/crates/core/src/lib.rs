//! Dimensionality reduction with distance-regularized Siamese twin autoencoders.
//!
//! This crate is the algorithmic core: a small dense neural-network engine,
//! the autoencoder family (AE, BNAE, CRAE, VAE and the distance-regularized
//! twin autoencoder), their losses and training protocol, exact PCA, a
//! Lorenz '63 trajectory generator and the distance-ordering KPI suite.
//!
//! It is `no_std` and only needs `alloc`. File formats, configuration and the
//! command-line pipeline live in the companion `diresa` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod error;
pub mod latent;
pub mod lorenz;
pub mod loss;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pca;
pub mod rank;
pub mod reducer;
pub mod seed;
pub mod stats;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use reducer::Reducer;
