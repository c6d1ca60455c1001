use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Mode;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Per-feature batch normalization with learned scale and shift.
///
/// Running statistics follow `running = momentum·running + (1−momentum)·batch`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormLayer {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    epsilon: f64,
    momentum: f64,
}

/// Values a train- or infer-mode forward pass keeps for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BnCache {
    pub mode: Mode,
    pub xhat: Matrix,
    pub inv_std: Vec<f64>,
    /// Batch statistics (train mode only; empty otherwise).
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormGrad {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_MOMENTUM: f64 = 0.99;

impl BatchNormLayer {
    pub fn new(width: usize) -> Self {
        BatchNormLayer {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
            epsilon: DEFAULT_EPSILON,
            momentum: DEFAULT_MOMENTUM,
        }
    }

    pub fn with_hyper(width: usize, epsilon: f64, momentum: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::Config(format!("batch-norm epsilon must be > 0, got {epsilon}")));
        }
        if !(momentum > 0.0 && momentum < 1.0) {
            return Err(Error::Config(format!("batch-norm momentum must be in (0,1), got {momentum}")));
        }
        Ok(BatchNormLayer {
            epsilon,
            momentum,
            ..BatchNormLayer::new(width)
        })
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn param_count(&self) -> usize {
        2 * self.width()
    }

    /// Normalizes `batch`. The running statistics are not touched; see
    /// [`BatchNormLayer::forward_mut`] or [`BatchNormLayer::update_running`].
    pub fn forward(&self, batch: &Matrix, mode: Mode) -> Result<(Matrix, BnCache)> {
        let w = self.width();
        if batch.cols() != w {
            return Err(Error::dim(format!("batch-norm layer ({w})"), w, batch.cols()));
        }
        let (mean, var, stats) = match mode {
            Mode::Train => {
                if batch.rows() < 2 {
                    return Err(Error::DegenerateBatch(format!(
                        "batch normalization in train mode needs at least 2 rows, got {}",
                        batch.rows()
                    )));
                }
                let m = batch.column_means();
                let v = batch.column_variances();
                (m.clone(), v.clone(), Some((m, v)))
            }
            Mode::Infer => (self.running_mean.clone(), self.running_var.clone(), None),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + self.epsilon)).collect();
        let mut xhat = Matrix::zeros(batch.rows(), w);
        let mut out = Matrix::zeros(batch.rows(), w);
        for i in 0..batch.rows() {
            let x = batch.row(i);
            for j in 0..w {
                let h = (x[j] - mean[j]) * inv_std[j];
                xhat[(i, j)] = h;
                out[(i, j)] = self.gamma[j] * h + self.beta[j];
            }
        }
        let (batch_mean, batch_var) = stats.unwrap_or_default();
        Ok((
            out,
            BnCache {
                mode,
                xhat,
                inv_std,
                batch_mean,
                batch_var,
            },
        ))
    }

    /// Forward pass that also folds train-mode batch statistics into the
    /// running averages.
    pub fn forward_mut(&mut self, batch: &Matrix, mode: Mode) -> Result<Matrix> {
        let (out, cache) = self.forward(batch, mode)?;
        self.update_running(&cache);
        Ok(out)
    }

    pub fn update_running(&mut self, cache: &BnCache) {
        if cache.mode != Mode::Train {
            return;
        }
        let m = self.momentum;
        for j in 0..self.width() {
            self.running_mean[j] = m * self.running_mean[j] + (1.0 - m) * cache.batch_mean[j];
            self.running_var[j] = m * self.running_var[j] + (1.0 - m) * cache.batch_var[j];
        }
    }

    pub fn backward(&self, cache: &BnCache, out_grad: &Matrix) -> Result<(BatchNormGrad, Matrix)> {
        let w = self.width();
        if out_grad.cols() != w || out_grad.rows() != cache.xhat.rows() || cache.xhat.cols() != w {
            return Err(Error::Structural(format!(
                "batch-norm backward: cache {}×{} vs gradient {}×{}",
                cache.xhat.rows(),
                cache.xhat.cols(),
                out_grad.rows(),
                out_grad.cols()
            )));
        }
        let n = out_grad.rows();
        let mut dgamma = vec![0.0; w];
        let mut dbeta = vec![0.0; w];
        for i in 0..n {
            for j in 0..w {
                let g = out_grad[(i, j)];
                dbeta[j] += g;
                dgamma[j] += g * cache.xhat[(i, j)];
            }
        }
        let mut dx = Matrix::zeros(n, w);
        match cache.mode {
            Mode::Infer => {
                for i in 0..n {
                    for j in 0..w {
                        dx[(i, j)] = out_grad[(i, j)] * self.gamma[j] * cache.inv_std[j];
                    }
                }
            }
            Mode::Train => {
                // dx = inv_std/N · (N·dxhat − Σ dxhat − xhat·Σ dxhat·xhat), dxhat = dy·gamma
                let nf = n as f64;
                for j in 0..w {
                    let sum_dxhat = dbeta[j] * self.gamma[j];
                    let sum_dxhat_xhat = dgamma[j] * self.gamma[j];
                    let scale = cache.inv_std[j] / nf;
                    for i in 0..n {
                        let dxhat = out_grad[(i, j)] * self.gamma[j];
                        dx[(i, j)] =
                            scale * (nf * dxhat - sum_dxhat - cache.xhat[(i, j)] * sum_dxhat_xhat);
                    }
                }
            }
        }
        Ok((
            BatchNormGrad {
                gamma: dgamma,
                beta: dbeta,
            },
            dx,
        ))
    }
}
