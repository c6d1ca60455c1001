use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    v
                } else {
                    0.0
                }
            }
            Activation::Linear => v,
        }
    }

    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// Fully connected layer `activation(x · Wᵀ + b)`.
///
/// `weights` is stored `out × in`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: Matrix,
    bias: Vec<f64>,
    activation: Activation,
}

/// Gradient of a scalar loss with respect to one dense layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::dim("dense bias length", weights.rows(), bias.len()));
        }
        Ok(DenseLayer {
            weights,
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights in ±√(6/(fan_in+fan_out)), zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = libm::sqrt(6.0 / (in_dim + out_dim) as f64);
        let data = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        DenseLayer {
            weights: Matrix::from_vec(out_dim, in_dim, data).expect("sized buffer"),
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn param_count(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.in_dim() {
            return Err(Error::dim(
                format!("dense layer {}→{} input", self.in_dim(), self.out_dim()),
                self.in_dim(),
                batch.cols(),
            ));
        }
        Ok(())
    }

    /// Affine part only: `x · Wᵀ + b`.
    pub fn pre_activation(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        let (n_out, n_in) = (self.out_dim(), self.in_dim());
        let mut out = Matrix::zeros(batch.rows(), n_out);
        let w = self.weights.as_slice();
        for (x, y) in batch.row_iter().zip(out.as_mut_slice().chunks_exact_mut(n_out.max(1))) {
            for (o, yo) in y.iter_mut().enumerate() {
                let wrow = &w[o * n_in..(o + 1) * n_in];
                let mut acc = self.bias[o];
                for (a, b) in x.iter().zip(wrow) {
                    acc += a * b;
                }
                *yo = acc;
            }
        }
        Ok(out)
    }

    pub fn activate(&self, pre: &Matrix) -> Matrix {
        match self.activation {
            Activation::Linear => pre.clone(),
            act => pre.map(|v| act.apply(v)),
        }
    }

    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        let pre = self.pre_activation(batch)?;
        Ok(match self.activation {
            Activation::Linear => pre,
            _ => self.activate(&pre),
        })
    }

    /// Returns the parameter gradient and the gradient with respect to `input`.
    pub fn backward(
        &self,
        input: &Matrix,
        pre: &Matrix,
        out_grad: &Matrix,
    ) -> Result<(DenseGrad, Matrix)> {
        self.check_input(input)?;
        if out_grad.cols() != self.out_dim() || pre.cols() != self.out_dim() {
            return Err(Error::dim("dense output gradient", self.out_dim(), out_grad.cols()));
        }
        if out_grad.rows() != input.rows() || pre.rows() != input.rows() {
            return Err(Error::Structural(format!(
                "dense backward batch {} vs gradient batch {}",
                input.rows(),
                out_grad.rows()
            )));
        }
        let (n_out, n_in) = (self.out_dim(), self.in_dim());
        let mut delta = out_grad.clone();
        if self.activation != Activation::Linear {
            for (d, &p) in delta.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                *d *= self.activation.derivative(p);
            }
        }
        let mut gw = Matrix::zeros(n_out, n_in);
        let mut gb = vec![0.0; n_out];
        let mut gx = Matrix::zeros(input.rows(), n_in);
        let w = self.weights.as_slice();
        for i in 0..input.rows() {
            let x = input.row(i);
            let d = delta.row(i);
            let gxr = gx.row_mut(i);
            for o in 0..n_out {
                let dv = d[o];
                if dv == 0.0 {
                    continue;
                }
                gb[o] += dv;
                let gwr = &mut gw.as_mut_slice()[o * n_in..(o + 1) * n_in];
                for (g, &xv) in gwr.iter_mut().zip(x) {
                    *g += dv * xv;
                }
                let wrow = &w[o * n_in..(o + 1) * n_in];
                for (g, &wv) in gxr.iter_mut().zip(wrow) {
                    *g += dv * wv;
                }
            }
        }
        Ok((DenseGrad { weights: gw, bias: gb }, gx))
    }
}
