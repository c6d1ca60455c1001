use alloc::format;
use alloc::vec::Vec;

use super::{BatchNormGrad, BatchNormLayer, BnCache, DenseGrad, DenseLayer, Mode};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    BatchNorm(BatchNormLayer),
}

impl Layer {
    pub fn param_count(&self) -> usize {
        match self {
            Layer::Dense(d) => d.param_count(),
            Layer::BatchNorm(b) => b.param_count(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Layer::Dense(d) => d.out_dim(),
            Layer::BatchNorm(b) => b.width(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TapeEntry {
    Dense { input: Matrix, pre: Matrix },
    BatchNorm(BnCache),
}

/// Activations recorded by [`Stack::forward`] for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    batch_size: usize,
    entries: Vec<TapeEntry>,
}

impl Tape {
    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerGrad {
    Dense(DenseGrad),
    BatchNorm(BatchNormGrad),
}

/// Gradients for every layer of a [`Stack`], in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct StackGrads {
    pub layers: Vec<LayerGrad>,
}

impl StackGrads {
    /// Appends all gradients in the same order as [`Stack::write_params`].
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for g in &self.layers {
            match g {
                LayerGrad::Dense(d) => {
                    out.extend_from_slice(d.weights.as_slice());
                    out.extend_from_slice(&d.bias);
                }
                LayerGrad::BatchNorm(b) => {
                    out.extend_from_slice(&b.gamma);
                    out.extend_from_slice(&b.beta);
                }
            }
        }
    }

    /// Element-wise accumulation (used where one stack is applied twice).
    pub fn add_assign(&mut self, other: &StackGrads) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::Structural("gradient layer counts differ".into()));
        }
        fn add(a: &mut [f64], b: &[f64]) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            match (a, b) {
                (LayerGrad::Dense(a), LayerGrad::Dense(b)) => {
                    add(a.weights.as_mut_slice(), b.weights.as_slice());
                    add(&mut a.bias, &b.bias);
                }
                (LayerGrad::BatchNorm(a), LayerGrad::BatchNorm(b)) => {
                    add(&mut a.gamma, &b.gamma);
                    add(&mut a.beta, &b.beta);
                }
                _ => return Err(Error::Structural("gradient layer kinds differ".into())),
            }
        }
        Ok(())
    }
}

/// A sequential stack of layers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Stack {
    layers: Vec<Layer>,
}

impl Stack {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        for (i, pair) in layers.windows(2).enumerate() {
            let out = pair[0].out_dim();
            let next_in = match &pair[1] {
                Layer::Dense(d) => d.in_dim(),
                Layer::BatchNorm(b) => b.width(),
            };
            if out != next_in {
                return Err(Error::dim(format!("stack layer {} input", i + 1), out, next_in));
            }
        }
        Ok(Stack { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> Option<usize> {
        self.layers.first().map(|l| match l {
            Layer::Dense(d) => d.in_dim(),
            Layer::BatchNorm(b) => b.width(),
        })
    }

    pub fn out_dim(&self) -> Option<usize> {
        self.layers.last().map(Layer::out_dim)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Forward pass recording a tape. Running statistics are untouched; call
    /// [`Stack::commit_running_stats`] with the tape after a training step.
    pub fn forward(&self, batch: &Matrix, mode: Mode) -> Result<(Matrix, Tape)> {
        let mut entries = Vec::with_capacity(self.layers.len());
        let mut x = batch.clone();
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    let pre = d.pre_activation(&x)?;
                    let out = d.activate(&pre);
                    entries.push(TapeEntry::Dense { input: x, pre });
                    x = out;
                }
                Layer::BatchNorm(b) => {
                    let (out, cache) = b.forward(&x, mode)?;
                    entries.push(TapeEntry::BatchNorm(cache));
                    x = out;
                }
            }
        }
        Ok((
            x,
            Tape {
                batch_size: batch.rows(),
                entries,
            },
        ))
    }

    /// Smallest |pre-activation| over all relu units in `tape`; how far the
    /// recorded pass is from a relu kink. Infinite without relu layers.
    pub fn relu_margin(&self, tape: &Tape) -> f64 {
        let mut margin = f64::INFINITY;
        for (layer, entry) in self.layers.iter().zip(&tape.entries) {
            if let (Layer::Dense(d), TapeEntry::Dense { pre, .. }) = (layer, entry) {
                if d.activation() == super::Activation::Relu {
                    margin = pre.as_slice().iter().fold(margin, |m, v| m.min(v.abs()));
                }
            }
        }
        margin
    }

    /// Inference-mode forward pass without a tape.
    pub fn infer(&self, batch: &Matrix) -> Result<Matrix> {
        let mut x = batch.clone();
        for layer in &self.layers {
            x = match layer {
                Layer::Dense(d) => d.forward(&x)?,
                Layer::BatchNorm(b) => b.forward(&x, Mode::Infer)?.0,
            };
        }
        Ok(x)
    }

    pub fn commit_running_stats(&mut self, tape: &Tape) -> Result<()> {
        self.check_tape(tape)?;
        for (layer, entry) in self.layers.iter_mut().zip(&tape.entries) {
            if let (Layer::BatchNorm(b), TapeEntry::BatchNorm(cache)) = (layer, entry) {
                b.update_running(cache);
            }
        }
        Ok(())
    }

    fn check_tape(&self, tape: &Tape) -> Result<()> {
        if tape.entries.len() != self.layers.len() {
            return Err(Error::Structural(format!(
                "tape has {} entries for a stack of {} layers",
                tape.entries.len(),
                self.layers.len()
            )));
        }
        for (i, (layer, entry)) in self.layers.iter().zip(&tape.entries).enumerate() {
            let ok = match (layer, entry) {
                (Layer::Dense(d), TapeEntry::Dense { input, pre }) => {
                    input.cols() == d.in_dim() && pre.cols() == d.out_dim()
                }
                (Layer::BatchNorm(b), TapeEntry::BatchNorm(c)) => c.xhat.cols() == b.width(),
                _ => false,
            };
            if !ok {
                return Err(Error::Structural(format!("tape entry {i} does not match layer {i}")));
            }
        }
        Ok(())
    }

    /// Reverse pass. Returns the parameter gradients and the gradient with
    /// respect to the stack input.
    pub fn backward(&self, tape: &Tape, out_grad: &Matrix) -> Result<(StackGrads, Matrix)> {
        self.check_tape(tape)?;
        if out_grad.rows() != tape.batch_size {
            return Err(Error::Structural(format!(
                "output gradient has {} rows, tape batch is {}",
                out_grad.rows(),
                tape.batch_size
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = out_grad.clone();
        for (layer, entry) in self.layers.iter().zip(&tape.entries).rev() {
            match (layer, entry) {
                (Layer::Dense(d), TapeEntry::Dense { input, pre }) => {
                    let (lg, gx) = d.backward(input, pre, &g)?;
                    grads.push(LayerGrad::Dense(lg));
                    g = gx;
                }
                (Layer::BatchNorm(b), TapeEntry::BatchNorm(cache)) => {
                    let (lg, gx) = b.backward(cache, &g)?;
                    grads.push(LayerGrad::BatchNorm(lg));
                    g = gx;
                }
                _ => unreachable!("checked by check_tape"),
            }
        }
        grads.reverse();
        Ok((StackGrads { layers: grads }, g))
    }

    /// Appends trainable parameters: per dense layer weights (row-major) then
    /// bias; per batch-norm layer gamma then beta.
    pub fn write_params(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.extend_from_slice(d.weights().as_slice());
                    out.extend_from_slice(d.bias());
                }
                Layer::BatchNorm(b) => {
                    out.extend_from_slice(&b.gamma);
                    out.extend_from_slice(&b.beta);
                }
            }
        }
    }

    /// Inverse of [`Stack::write_params`]; returns the number of values consumed.
    pub fn read_params(&mut self, src: &[f64]) -> Result<usize> {
        let need = self.param_count();
        if src.len() < need {
            return Err(Error::dim("parameter buffer", need, src.len()));
        }
        let mut pos = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&src[pos..pos + dst.len()]);
            pos += dst.len();
        };
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => {
                    take(d.weights_mut().as_mut_slice());
                    take(d.bias_mut());
                }
                Layer::BatchNorm(b) => {
                    take(&mut b.gamma);
                    take(&mut b.beta);
                }
            }
        }
        Ok(pos)
    }

    /// Number of values in the full state (parameters plus running statistics).
    pub fn state_len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => d.param_count(),
                Layer::BatchNorm(b) => 4 * b.width(),
            })
            .sum()
    }

    /// Full state in layer order: dense weights, bias; batch-norm gamma,
    /// beta, running mean, running variance.
    pub fn write_state(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.extend_from_slice(d.weights().as_slice());
                    out.extend_from_slice(d.bias());
                }
                Layer::BatchNorm(b) => {
                    out.extend_from_slice(&b.gamma);
                    out.extend_from_slice(&b.beta);
                    out.extend_from_slice(&b.running_mean);
                    out.extend_from_slice(&b.running_var);
                }
            }
        }
    }

    pub fn read_state(&mut self, src: &[f64]) -> Result<usize> {
        let need = self.state_len();
        if src.len() < need {
            return Err(Error::dim("state buffer", need, src.len()));
        }
        let mut pos = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&src[pos..pos + dst.len()]);
            pos += dst.len();
        };
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => {
                    take(d.weights_mut().as_mut_slice());
                    take(d.bias_mut());
                }
                Layer::BatchNorm(b) => {
                    take(&mut b.gamma);
                    take(&mut b.beta);
                    take(&mut b.running_mean);
                    take(&mut b.running_var);
                }
            }
        }
        Ok(pos)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{central_difference, max_relative_error};
    use crate::nn::Activation;
    use crate::seed;
    use alloc::vec;
    use rand::Rng;

    fn sample_stack(rng: &mut seed::SeededRng, with_bn: bool) -> Stack {
        let mut layers = vec![
            Layer::Dense(DenseLayer::glorot(3, 5, Activation::Relu, rng)),
            Layer::Dense(DenseLayer::glorot(5, 2, Activation::Linear, rng)),
        ];
        if with_bn {
            let mut bn = BatchNormLayer::new(2);
            bn.gamma = vec![rng.gen_range(0.5..1.5), rng.gen_range(-1.5..-0.5)];
            bn.beta = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            layers.push(Layer::BatchNorm(bn));
        }
        for l in &mut layers {
            if let Layer::Dense(d) = l {
                for b in d.bias_mut() {
                    *b = rng.gen_range(-0.3..0.3);
                }
            }
        }
        Stack::new(layers).unwrap()
    }

    /// loss = Σ c_ij · y_ij² / 2 with fixed random weights c.
    fn loss_and_grad(y: &Matrix, c: &[f64]) -> (f64, Matrix) {
        let mut g = y.clone();
        let mut l = 0.0;
        for ((gv, &yv), &cv) in g.as_mut_slice().iter_mut().zip(y.as_slice()).zip(c) {
            l += 0.5 * cv * yv * yv;
            *gv = cv * yv;
        }
        (l, g)
    }

    #[test]
    fn backward_matches_finite_differences() {
        for case in 0..120u64 {
            let mut rng = seed::rng(100 + case);
            let stack = sample_stack(&mut rng, case % 2 == 0);
            let x = Matrix::from_vec(6, 3, (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let c: Vec<f64> = (0..12).map(|_| rng.gen_range(0.1..2.0)).collect();
            let (y, tape) = stack.forward(&x, Mode::Train).unwrap();
            let (_, g) = loss_and_grad(&y, &c);
            let (grads, _) = stack.backward(&tape, &g).unwrap();
            let mut analytic = Vec::new();
            grads.write_flat(&mut analytic);
            let mut p0 = Vec::new();
            stack.write_params(&mut p0);
            let numeric = central_difference(
                |p| {
                    let mut s = stack.clone();
                    s.read_params(p).unwrap();
                    let (y, _) = s.forward(&x, Mode::Train).unwrap();
                    loss_and_grad(&y, &c).0
                },
                &p0,
                1e-5,
            );
            let err = max_relative_error(&analytic, &numeric);
            assert!(err < 1e-4, "case {case}: relative error {err}");
        }
    }

    #[test]
    fn tape_mismatch_is_structural() {
        let mut rng = seed::rng(1);
        let a = sample_stack(&mut rng, true);
        let b = sample_stack(&mut rng, false);
        let x = Matrix::zeros(4, 3);
        let (y, tape) = a.forward(&x, Mode::Train).unwrap();
        assert!(matches!(b.backward(&tape, &y), Err(Error::Structural(_))));
    }

    #[test]
    fn state_round_trip() {
        let mut rng = seed::rng(2);
        let mut a = sample_stack(&mut rng, true);
        let x = Matrix::from_vec(4, 3, (0..12).map(|i| i as f64 * 0.1).collect()).unwrap();
        let (_, tape) = a.forward(&x, Mode::Train).unwrap();
        a.commit_running_stats(&tape).unwrap();
        let mut buf = Vec::new();
        a.write_state(&mut buf);
        assert_eq!(buf.len(), a.state_len());
        let mut b = sample_stack(&mut seed::rng(99), true);
        b.read_state(&buf).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_layers_rejected() {
        let mut rng = seed::rng(4);
        let layers = vec![
            Layer::Dense(DenseLayer::glorot(3, 5, Activation::Relu, &mut rng)),
            Layer::Dense(DenseLayer::glorot(4, 2, Activation::Linear, &mut rng)),
        ];
        assert!(Stack::new(layers).is_err());
    }
}
