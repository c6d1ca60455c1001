//! A common interface over everything that maps data to a latent space and back.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::ModelParams;

pub trait Reducer {
    fn input_dim(&self) -> usize;
    fn latent_dim(&self) -> usize;
    /// Deterministic (inference-mode) encoding, one row per sample.
    fn encode(&self, batch: &Matrix) -> Result<Matrix>;
    fn decode(&self, latent: &Matrix) -> Result<Matrix>;
}

impl Reducer for ModelParams {
    fn input_dim(&self) -> usize {
        self.spec().input_dim
    }

    fn latent_dim(&self) -> usize {
        self.spec().latent_dim
    }

    fn encode(&self, batch: &Matrix) -> Result<Matrix> {
        ModelParams::encode(self, batch)
    }

    fn decode(&self, latent: &Matrix) -> Result<Matrix> {
        ModelParams::decode(self, latent)
    }
}

/// The identity embedding, latent = input. Useful as a sanity baseline for
/// the distance metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Identity {
    pub dim: usize,
}

impl Reducer for Identity {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn latent_dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, batch: &Matrix) -> Result<Matrix> {
        if batch.cols() != self.dim {
            return Err(Error::dim("identity input", self.dim, batch.cols()));
        }
        Ok(batch.clone())
    }

    fn decode(&self, latent: &Matrix) -> Result<Matrix> {
        self.encode(latent)
    }
}
