//! The autoencoder family: AE, BNAE, CRAE, VAE and the distance-regularized
//! Siamese twin autoencoder (DIRESA).
//!
//! All variants share the same encoder/decoder skeleton: dense relu hidden
//! layers, a linear latent layer and a decoder that mirrors the encoder with
//! a linear output layer. BNAE appends batch normalization to the latent
//! layer; VAE replaces the latent layer by mean and log-variance heads and a
//! reparameterized sampler. DIRESA runs the *same* encoder a second time on a
//! shuffled copy of the batch and exposes both input-space and latent-space
//! pair distances.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{Activation, BatchNormLayer, DenseLayer, Layer, Mode, Stack, Tape};
use crate::seed::{self, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Variant {
    #[cfg_attr(feature = "serde", serde(rename = "AE"))]
    Ae,
    #[cfg_attr(feature = "serde", serde(rename = "BNAE"))]
    Bnae,
    #[cfg_attr(feature = "serde", serde(rename = "CRAE"))]
    Crae,
    #[cfg_attr(feature = "serde", serde(rename = "VAE"))]
    Vae,
    #[cfg_attr(feature = "serde", serde(rename = "DIRESA"))]
    Diresa,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Ae,
        Variant::Bnae,
        Variant::Crae,
        Variant::Vae,
        Variant::Diresa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ae => "AE",
            Variant::Bnae => "BNAE",
            Variant::Crae => "CRAE",
            Variant::Vae => "VAE",
            Variant::Diresa => "DIRESA",
        }
    }

    /// Variants whose regularizer weight is annealed (covariance or KL).
    pub fn is_annealed(self) -> bool {
        matches!(self, Variant::Crae | Variant::Vae | Variant::Diresa)
    }

    pub fn has_cov_loss(self) -> bool {
        matches!(self, Variant::Crae | Variant::Diresa)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model variant '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum DistanceLoss {
    Mse,
    Msle,
    Corr,
    LogCorr,
}

impl DistanceLoss {
    pub const ALL: [DistanceLoss; 4] = [
        DistanceLoss::Mse,
        DistanceLoss::Msle,
        DistanceLoss::Corr,
        DistanceLoss::LogCorr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistanceLoss::Mse => "mse",
            DistanceLoss::Msle => "msle",
            DistanceLoss::Corr => "corr",
            DistanceLoss::LogCorr => "logcorr",
        }
    }

    pub fn is_correlation(self) -> bool {
        matches!(self, DistanceLoss::Corr | DistanceLoss::LogCorr)
    }
}

impl FromStr for DistanceLoss {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        DistanceLoss::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown distance loss '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelSpec {
    pub variant: Variant,
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub latent_dim: usize,
    pub distance_loss: Option<DistanceLoss>,
}

impl ModelSpec {
    /// 3 → 40 → 20 → 2 encoder with a mirrored decoder.
    pub fn lorenz(variant: Variant) -> Self {
        ModelSpec {
            variant,
            input_dim: 3,
            hidden_widths: vec![40, 20],
            latent_dim: 2,
            distance_loss: (variant == Variant::Diresa).then_some(DistanceLoss::Mse),
        }
    }

    pub fn diresa(distance_loss: DistanceLoss) -> Self {
        ModelSpec {
            distance_loss: Some(distance_loss),
            ..ModelSpec::lorenz(Variant::Diresa)
        }
    }

    /// Short label such as `AE` or `DIRESA_MSE`.
    pub fn label(&self) -> String {
        match (self.variant, self.distance_loss) {
            (Variant::Diresa, Some(d)) => {
                let suffix = match d {
                    DistanceLoss::Mse => "MSE",
                    DistanceLoss::Msle => "MSLE",
                    DistanceLoss::Corr => "Corr",
                    DistanceLoss::LogCorr => "LogCorr",
                };
                format!("DIRESA_{suffix}")
            }
            (v, _) => v.name().into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.latent_dim >= self.input_dim {
            return Err(Error::Config(format!(
                "latent_dim must satisfy 0 < latent_dim < input_dim ({} vs {})",
                self.latent_dim, self.input_dim
            )));
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return Err(Error::Config("hidden_widths must be nonempty and positive".into()));
        }
        match (self.variant, self.distance_loss) {
            (Variant::Diresa, None) => Err(Error::Config("DIRESA requires a distance_loss".into())),
            (Variant::Diresa, Some(_)) => Ok(()),
            (v, Some(_)) => Err(Error::Config(format!("{v} does not take a distance_loss"))),
            (_, None) => Ok(()),
        }
    }
}

/// Mean and log-variance heads of the VAE encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeHeads {
    pub mean: DenseLayer,
    pub logvar: DenseLayer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    spec: ModelSpec,
    /// Full encoder for AE/BNAE/CRAE/DIRESA; hidden trunk only for VAE.
    encoder: Stack,
    heads: Option<VaeHeads>,
    decoder: Stack,
}

/// Everything a forward pass produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardBundle {
    pub reconstruction: Matrix,
    /// The code fed to the decoder (the VAE sample in train mode).
    pub latent: Matrix,
    pub twin_latent: Option<Matrix>,
    pub d_x: Option<Vec<f64>>,
    pub d_z: Option<Vec<f64>>,
    pub vae_mean: Option<Matrix>,
    pub vae_logvar: Option<Matrix>,
    pub vae_noise: Option<Matrix>,
}

/// Recorded state needed by [`ModelParams::backward`].
#[derive(Debug, Clone)]
pub struct ForwardTape {
    encoder: Tape,
    twin_encoder: Option<Tape>,
    trunk_out: Option<Matrix>,
    decoder: Tape,
    mode: Mode,
}

/// Gradient of a scalar loss with respect to the outputs in a [`ForwardBundle`].
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGrads {
    pub reconstruction: Matrix,
    /// Extra gradient on the decoder input beyond what flows back from the
    /// reconstruction (covariance and distance terms).
    pub latent: Option<Matrix>,
    pub twin_latent: Option<Matrix>,
    pub vae_mean: Option<Matrix>,
    pub vae_logvar: Option<Matrix>,
}

/// Builds the encoder/decoder stacks for `spec` with Glorot-uniform weights.
pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<ModelParams> {
    spec.validate()?;
    let mut rng = seed::rng(seed);
    let mut enc = Vec::new();
    let mut width = spec.input_dim;
    for &h in &spec.hidden_widths {
        enc.push(Layer::Dense(DenseLayer::glorot(width, h, Activation::Relu, &mut rng)));
        width = h;
    }
    let heads = if spec.variant == Variant::Vae {
        Some(VaeHeads {
            mean: DenseLayer::glorot(width, spec.latent_dim, Activation::Linear, &mut rng),
            logvar: DenseLayer::glorot(width, spec.latent_dim, Activation::Linear, &mut rng),
        })
    } else {
        enc.push(Layer::Dense(DenseLayer::glorot(
            width,
            spec.latent_dim,
            Activation::Linear,
            &mut rng,
        )));
        if spec.variant == Variant::Bnae {
            enc.push(Layer::BatchNorm(BatchNormLayer::new(spec.latent_dim)));
        }
        None
    };
    let mut dec = Vec::new();
    let mut width = spec.latent_dim;
    for &h in spec.hidden_widths.iter().rev() {
        dec.push(Layer::Dense(DenseLayer::glorot(width, h, Activation::Relu, &mut rng)));
        width = h;
    }
    dec.push(Layer::Dense(DenseLayer::glorot(
        width,
        spec.input_dim,
        Activation::Linear,
        &mut rng,
    )));
    Ok(ModelParams {
        spec: spec.clone(),
        encoder: Stack::new(enc)?,
        heads,
        decoder: Stack::new(dec)?,
    })
}

/// Per-row Euclidean distance between two equally shaped matrices.
pub fn distance_layer(a: &Matrix, b: &Matrix) -> Result<Vec<f64>> {
    if a.cols() != b.cols() {
        return Err(Error::dim("distance layer columns", a.cols(), b.cols()));
    }
    if a.rows() != b.rows() {
        return Err(Error::dim("distance layer rows", a.rows(), b.rows()));
    }
    Ok(a.row_iter()
        .zip(b.row_iter())
        .map(|(x, y)| {
            let s: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
            libm::sqrt(s)
        })
        .collect())
}

impl ModelParams {
    /// Assembles a model from explicit stacks (used by tests and checkpoints).
    pub fn from_parts(
        spec: ModelSpec,
        encoder: Stack,
        heads: Option<VaeHeads>,
        decoder: Stack,
    ) -> Result<Self> {
        let enc_out = match &heads {
            Some(h) => {
                if h.mean.out_dim() != h.logvar.out_dim() || h.mean.in_dim() != h.logvar.in_dim() {
                    return Err(Error::Structural("VAE heads differ in shape".into()));
                }
                h.mean.out_dim()
            }
            None => encoder.out_dim().unwrap_or(0),
        };
        if enc_out != decoder.in_dim().unwrap_or(0) {
            return Err(Error::dim("decoder input", enc_out, decoder.in_dim().unwrap_or(0)));
        }
        if (spec.variant == Variant::Vae) != heads.is_some() {
            return Err(Error::Structural("VAE heads present iff variant is VAE".into()));
        }
        Ok(ModelParams {
            spec,
            encoder,
            heads,
            decoder,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn encoder(&self) -> &Stack {
        &self.encoder
    }

    /// The twin branch. It is the encoder itself, not a copy.
    pub fn twin_encoder(&self) -> &Stack {
        &self.encoder
    }

    pub fn encoder_mut(&mut self) -> &mut Stack {
        &mut self.encoder
    }

    pub fn heads(&self) -> Option<&VaeHeads> {
        self.heads.as_ref()
    }

    pub fn decoder(&self) -> &Stack {
        &self.decoder
    }

    pub fn decoder_mut(&mut self) -> &mut Stack {
        &mut self.decoder
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count()
            + self
                .heads
                .as_ref()
                .map_or(0, |h| h.mean.param_count() + h.logvar.param_count())
            + self.decoder.param_count()
    }

    /// Trainable parameters: encoder, VAE heads (mean then log-variance),
    /// decoder.
    pub fn write_params(&self, out: &mut Vec<f64>) {
        self.encoder.write_params(out);
        if let Some(h) = &self.heads {
            for d in [&h.mean, &h.logvar] {
                out.extend_from_slice(d.weights().as_slice());
                out.extend_from_slice(d.bias());
            }
        }
        self.decoder.write_params(out);
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        self.write_params(&mut v);
        v
    }

    pub fn read_params(&mut self, src: &[f64]) -> Result<()> {
        if src.len() != self.param_count() {
            return Err(Error::dim("model parameter vector", self.param_count(), src.len()));
        }
        let mut pos = self.encoder.read_params(src)?;
        if let Some(h) = &mut self.heads {
            for d in [&mut h.mean, &mut h.logvar] {
                let nw = d.weights().as_slice().len();
                d.weights_mut().as_mut_slice().copy_from_slice(&src[pos..pos + nw]);
                pos += nw;
                let nb = d.bias().len();
                d.bias_mut().copy_from_slice(&src[pos..pos + nb]);
                pos += nb;
            }
        }
        self.decoder.read_params(&src[pos..])?;
        Ok(())
    }

    pub fn state_len(&self) -> usize {
        self.encoder.state_len()
            + self
                .heads
                .as_ref()
                .map_or(0, |h| h.mean.param_count() + h.logvar.param_count())
            + self.decoder.state_len()
    }

    /// Parameters plus batch-norm running statistics, in declared layer order.
    pub fn write_state(&self, out: &mut Vec<f64>) {
        self.encoder.write_state(out);
        if let Some(h) = &self.heads {
            for d in [&h.mean, &h.logvar] {
                out.extend_from_slice(d.weights().as_slice());
                out.extend_from_slice(d.bias());
            }
        }
        self.decoder.write_state(out);
    }

    pub fn read_state(&mut self, src: &[f64]) -> Result<()> {
        if src.len() != self.state_len() {
            return Err(Error::dim("model state vector", self.state_len(), src.len()));
        }
        let mut pos = self.encoder.read_state(src)?;
        if let Some(h) = &mut self.heads {
            for d in [&mut h.mean, &mut h.logvar] {
                let nw = d.weights().as_slice().len();
                d.weights_mut().as_mut_slice().copy_from_slice(&src[pos..pos + nw]);
                pos += nw;
                let nb = d.bias().len();
                d.bias_mut().copy_from_slice(&src[pos..pos + nb]);
                pos += nb;
            }
        }
        self.decoder.read_state(&src[pos..])?;
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        let mut v = Vec::new();
        self.write_state(&mut v);
        v.iter().all(|x| x.is_finite())
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.spec.input_dim {
            return Err(Error::dim("model input", self.spec.input_dim, batch.cols()));
        }
        Ok(())
    }

    /// Deterministic encoding (inference mode; the VAE returns its mean head).
    pub fn encode(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        let h = self.encoder.infer(batch)?;
        match &self.heads {
            Some(heads) => heads.mean.forward(&h),
            None => Ok(h),
        }
    }

    pub fn decode(&self, latent: &Matrix) -> Result<Matrix> {
        if latent.cols() != self.spec.latent_dim {
            return Err(Error::dim("decoder input", self.spec.latent_dim, latent.cols()));
        }
        self.decoder.infer(latent)
    }

    /// Forward pass without keeping a tape.
    pub fn forward(
        &self,
        batch: &Matrix,
        twin_batch: Option<&Matrix>,
        rng: Option<&mut SeededRng>,
        mode: Mode,
    ) -> Result<ForwardBundle> {
        self.forward_taped(batch, twin_batch, rng, mode).map(|(b, _)| b)
    }

    /// Forward pass recording what [`ModelParams::backward`] needs.
    ///
    /// `twin_batch` is required for DIRESA and rejected otherwise. `rng` is
    /// required for the VAE in train mode, where the latent code is
    /// `mean + exp(logvar/2)·ε` with standard normal ε; in infer mode the
    /// VAE feeds its mean to the decoder.
    pub fn forward_taped(
        &self,
        batch: &Matrix,
        twin_batch: Option<&Matrix>,
        rng: Option<&mut SeededRng>,
        mode: Mode,
    ) -> Result<(ForwardBundle, ForwardTape)> {
        self.check_input(batch)?;
        let is_diresa = self.spec.variant == Variant::Diresa;
        match (is_diresa, twin_batch) {
            (true, None) => {
                return Err(Error::Config("DIRESA forward requires a twin batch".into()))
            }
            (false, Some(_)) => {
                return Err(Error::Config(format!(
                    "{} does not take a twin batch",
                    self.spec.variant
                )))
            }
            _ => {}
        }
        let (enc_out, enc_tape) = self.encoder.forward(batch, mode)?;
        let mut bundle_vae = (None, None, None);
        let (latent, trunk_out) = match &self.heads {
            None => (enc_out, None),
            Some(heads) => {
                let mean = heads.mean.forward(&enc_out)?;
                let logvar = heads.logvar.forward(&enc_out)?;
                let z = match mode {
                    Mode::Infer => mean.clone(),
                    Mode::Train => {
                        let rng = rng.ok_or_else(|| {
                            Error::Config("VAE training forward requires a random source".into())
                        })?;
                        let mut noise = Matrix::zeros(mean.rows(), mean.cols());
                        for e in noise.as_mut_slice() {
                            *e = rng.sample(StandardNormal);
                        }
                        let mut z = mean.clone();
                        for ((zv, &lv), &e) in z
                            .as_mut_slice()
                            .iter_mut()
                            .zip(logvar.as_slice())
                            .zip(noise.as_slice())
                        {
                            *zv += libm::exp(0.5 * lv) * e;
                        }
                        bundle_vae.2 = Some(noise);
                        z
                    }
                };
                bundle_vae.0 = Some(mean);
                bundle_vae.1 = Some(logvar);
                (z, Some(enc_out))
            }
        };
        let (twin_latent, twin_tape, d_x, d_z) = match twin_batch {
            Some(tb) => {
                self.check_input(tb)?;
                if tb.rows() != batch.rows() {
                    return Err(Error::dim("twin batch rows", batch.rows(), tb.rows()));
                }
                let (tz, tt) = self.encoder.forward(tb, mode)?;
                let dx = distance_layer(batch, tb)?;
                let dz = distance_layer(&latent, &tz)?;
                (Some(tz), Some(tt), Some(dx), Some(dz))
            }
            None => (None, None, None, None),
        };
        let (reconstruction, dec_tape) = self.decoder.forward(&latent, mode)?;
        Ok((
            ForwardBundle {
                reconstruction,
                latent,
                twin_latent,
                d_x,
                d_z,
                vae_mean: bundle_vae.0,
                vae_logvar: bundle_vae.1,
                vae_noise: bundle_vae.2,
            },
            ForwardTape {
                encoder: enc_tape,
                twin_encoder: twin_tape,
                trunk_out,
                decoder: dec_tape,
                mode,
            },
        ))
    }

    /// Reverse pass through decoder, sampler and (both) encoder branches.
    /// Returns the flat gradient in [`ModelParams::write_params`] order.
    pub fn backward(
        &self,
        bundle: &ForwardBundle,
        tape: &ForwardTape,
        grads: &OutputGrads,
    ) -> Result<Vec<f64>> {
        let (dec_grads, mut g_latent) = self.decoder.backward(&tape.decoder, &grads.reconstruction)?;
        if let Some(extra) = &grads.latent {
            add_into(&mut g_latent, extra)?;
        }
        let mut flat = Vec::with_capacity(self.param_count());
        match &self.heads {
            None => {
                let (mut enc_grads, _) = self.encoder.backward(&tape.encoder, &g_latent)?;
                match (&tape.twin_encoder, &grads.twin_latent) {
                    (Some(tt), Some(gt)) => {
                        let (twin_grads, _) = self.encoder.backward(tt, gt)?;
                        enc_grads.add_assign(&twin_grads)?;
                    }
                    (None, None) | (Some(_), None) => {}
                    (None, Some(_)) => {
                        return Err(Error::Structural(
                            "twin latent gradient without a twin tape".into(),
                        ))
                    }
                }
                enc_grads.write_flat(&mut flat);
            }
            Some(heads) => {
                let trunk = tape
                    .trunk_out
                    .as_ref()
                    .ok_or_else(|| Error::Structural("VAE tape lacks trunk output".into()))?;
                let mean = bundle.vae_mean.as_ref().ok_or_else(missing_vae)?;
                let logvar = bundle.vae_logvar.as_ref().ok_or_else(missing_vae)?;
                // z = mean + exp(logvar/2)·ε; in infer mode z = mean.
                let mut g_mean = g_latent.clone();
                let mut g_logvar = Matrix::zeros(logvar.rows(), logvar.cols());
                if tape.mode == Mode::Train {
                    let noise = bundle.vae_noise.as_ref().ok_or_else(missing_vae)?;
                    for (((gl, &gz), &lv), &e) in g_logvar
                        .as_mut_slice()
                        .iter_mut()
                        .zip(g_latent.as_slice())
                        .zip(logvar.as_slice())
                        .zip(noise.as_slice())
                    {
                        *gl = gz * e * 0.5 * libm::exp(0.5 * lv);
                    }
                }
                if let Some(g) = &grads.vae_mean {
                    add_into(&mut g_mean, g)?;
                }
                if let Some(g) = &grads.vae_logvar {
                    add_into(&mut g_logvar, g)?;
                }
                let mean_pre = heads.mean.pre_activation(trunk)?;
                let lv_pre = heads.logvar.pre_activation(trunk)?;
                debug_assert_eq!(mean_pre.as_slice().len(), mean.as_slice().len());
                let (gm, mut g_trunk) = heads.mean.backward(trunk, &mean_pre, &g_mean)?;
                let (gv, g_trunk2) = heads.logvar.backward(trunk, &lv_pre, &g_logvar)?;
                add_into(&mut g_trunk, &g_trunk2)?;
                let (enc_grads, _) = self.encoder.backward(&tape.encoder, &g_trunk)?;
                enc_grads.write_flat(&mut flat);
                for g in [gm, gv] {
                    flat.extend_from_slice(g.weights.as_slice());
                    flat.extend_from_slice(&g.bias);
                }
            }
        }
        dec_grads.write_flat(&mut flat);
        Ok(flat)
    }

    /// Smallest |pre-activation| of any relu unit in the recorded pass.
    pub fn relu_margin(&self, tape: &ForwardTape) -> f64 {
        let twin = tape
            .twin_encoder
            .as_ref()
            .map_or(f64::INFINITY, |t| self.encoder.relu_margin(t));
        self.encoder
            .relu_margin(&tape.encoder)
            .min(twin)
            .min(self.decoder.relu_margin(&tape.decoder))
    }

    /// Folds train-mode batch-norm statistics from a tape into the running
    /// averages. Only the primary branch contributes.
    pub fn commit_running_stats(&mut self, tape: &ForwardTape) -> Result<()> {
        self.encoder.commit_running_stats(&tape.encoder)?;
        self.decoder.commit_running_stats(&tape.decoder)
    }
}

fn missing_vae() -> Error {
    Error::Structural("VAE bundle lacks mean/log-variance/noise".into())
}

fn add_into(a: &mut Matrix, b: &Matrix) -> Result<()> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::Structural(format!(
            "gradient shape {}×{} vs {}×{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
        *x += y;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn lorenz_ae_parameter_count() {
        let m = build_model(&ModelSpec::lorenz(Variant::Ae), 1).unwrap();
        assert_eq!(
            m.param_count(),
            (3 * 40 + 40) + (40 * 20 + 20) + (20 * 2 + 2) + (2 * 20 + 20) + (20 * 40 + 40) + (40 * 3 + 3)
        );
        assert_eq!(m.param_count(), 2045);
        let vae = build_model(&ModelSpec::lorenz(Variant::Vae), 1).unwrap();
        assert_eq!(vae.param_count(), 2045 + 42);
        let bn = build_model(&ModelSpec::lorenz(Variant::Bnae), 1).unwrap();
        assert_eq!(bn.param_count(), 2045 + 4);
    }

    #[test]
    fn same_seed_same_bits() {
        for v in Variant::ALL {
            let spec = ModelSpec::lorenz(v);
            let a = build_model(&spec, 42).unwrap().params_flat();
            let b = build_model(&spec, 42).unwrap().params_flat();
            let c = build_model(&spec, 43).unwrap().params_flat();
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
            assert_ne!(a, c);
        }
    }

    #[test]
    fn twin_shares_storage() {
        let mut m = build_model(&ModelSpec::diresa(DistanceLoss::Mse), 3).unwrap();
        assert!(core::ptr::eq(m.encoder(), m.twin_encoder()));
        if let Layer::Dense(d) = &mut m.encoder_mut().layers_mut()[0] {
            d.weights_mut()[(0, 0)] = 123.0;
        }
        match &m.twin_encoder().layers()[0] {
            Layer::Dense(d) => assert_eq!(d.weights()[(0, 0)], 123.0),
            _ => unreachable!(),
        }
    }

    #[test]
    fn identity_chain() {
        let one = || {
            Layer::Dense(
                DenseLayer::new(Matrix::from_rows(&[[1.0]]).unwrap(), vec![0.0], Activation::Linear)
                    .unwrap(),
            )
        };
        // 1→1→1 is below the latent < input rule of ModelSpec::validate, so
        // assemble the parts directly.
        let spec = ModelSpec {
            variant: Variant::Ae,
            input_dim: 1,
            hidden_widths: vec![1],
            latent_dim: 1,
            distance_loss: None,
        };
        let m = ModelParams::from_parts(
            spec,
            Stack::new(vec![one()]).unwrap(),
            None,
            Stack::new(vec![one()]).unwrap(),
        )
        .unwrap();
        let x = Matrix::from_rows(&[[0.3]]).unwrap();
        let b = m.forward(&x, None, None, Mode::Train).unwrap();
        assert_eq!(b.reconstruction.as_slice(), &[0.3]);
    }

    #[test]
    fn vae_infer_uses_mean() {
        let m = build_model(&ModelSpec::lorenz(Variant::Vae), 5).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.5, 0.9], [0.4, 0.2, 0.3]]).unwrap();
        let b = m.forward(&x, None, None, Mode::Infer).unwrap();
        assert_eq!(b.latent, b.vae_mean.clone().unwrap());
        assert_eq!(m.encode(&x).unwrap(), b.latent);
        assert_eq!(m.encode(&x).unwrap(), m.encode(&x).unwrap());
        assert!(m.forward(&x, None, None, Mode::Train).is_err());
    }

    #[test]
    fn vae_sampling_statistics() {
        let m = build_model(&ModelSpec::lorenz(Variant::Vae), 5).unwrap();
        let n = 100_000;
        let x = Matrix::from_vec(n, 3, [0.2, 0.6, 0.4].repeat(n)).unwrap();
        let mut rng = crate::seed::rng(17);
        let b = m.forward(&x, None, Some(&mut rng), Mode::Train).unwrap();
        let (mean, logvar) = (b.vae_mean.unwrap(), b.vae_logvar.unwrap());
        let means = b.latent.column_means();
        let stds: Vec<f64> = b.latent.column_variances().iter().map(|v| v.sqrt()).collect();
        for j in 0..2 {
            let (mu, sigma) = (mean[(0, j)], (0.5 * logvar[(0, j)]).exp());
            // 2% of sigma for the mean; the sample std itself within 2%
            assert!((means[j] - mu).abs() < 0.02 * sigma, "mean {j}: {} vs {mu}", means[j]);
            assert!((stds[j] / sigma - 1.0).abs() < 0.02, "std {j}: {} vs {sigma}", stds[j]);
        }
    }

    #[test]
    fn diresa_latents_match_two_encoder_calls() {
        let m = build_model(&ModelSpec::diresa(DistanceLoss::Corr), 8).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.5, 0.9], [0.4, 0.2, 0.3], [0.7, 0.7, 0.1]]).unwrap();
        let t = Matrix::from_rows(&[[0.4, 0.2, 0.3], [0.7, 0.7, 0.1], [0.1, 0.5, 0.9]]).unwrap();
        let b = m.forward(&x, Some(&t), None, Mode::Infer).unwrap();
        assert_eq!(b.latent, m.encode(&x).unwrap());
        assert_eq!(b.twin_latent.clone().unwrap(), m.encode(&t).unwrap());
        assert_eq!(b.d_x.unwrap(), distance_layer(&x, &t).unwrap());
        assert!(m.forward(&x, None, None, Mode::Infer).is_err());
        let ae = build_model(&ModelSpec::lorenz(Variant::Ae), 8).unwrap();
        assert!(ae.forward(&x, Some(&t), None, Mode::Infer).is_err());
    }

    #[test]
    fn distance_layer_basics() {
        let a = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let b = Matrix::from_rows(&[[3.0, 4.0], [1.0, 1.0]]).unwrap();
        assert_eq!(distance_layer(&a, &b).unwrap(), vec![5.0, 0.0]);
        assert!(distance_layer(&a, &Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn batch_consistent_encoding() {
        let m = build_model(&ModelSpec::lorenz(Variant::Bnae), 2).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.5, 0.9], [0.4, 0.2, 0.3], [0.7, 0.7, 0.1]]).unwrap();
        let all = m.encode(&x).unwrap();
        for i in 0..3 {
            let one = m.encode(&x.slice_rows(i, i + 1)).unwrap();
            assert_eq!(one.row(0), all.row(i));
        }
    }

    #[test]
    fn spec_validation() {
        let mut s = ModelSpec::lorenz(Variant::Ae);
        s.distance_loss = Some(DistanceLoss::Mse);
        assert!(s.validate().is_err());
        let mut s = ModelSpec::lorenz(Variant::Diresa);
        s.distance_loss = None;
        assert!(s.validate().is_err());
        let mut s = ModelSpec::lorenz(Variant::Ae);
        s.latent_dim = 3;
        assert!(s.validate().is_err());
        assert_eq!("diresa".parse::<Variant>().unwrap(), Variant::Diresa);
        assert_eq!(ModelSpec::diresa(DistanceLoss::LogCorr).label(), "DIRESA_LogCorr");
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(seed in 0u64..500) {
            let mut rng = seed::rng(seed);
            let mut pt = || Matrix::from_vec(1, 4, (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
            let (a, b, c) = (pt(), pt(), pt());
            let d = |p: &Matrix, q: &Matrix| distance_layer(p, q).unwrap()[0];
            prop_assert!(d(&a, &b) >= 0.0);
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
            let oracle: f64 = (0..4).map(|i| (a[(0, i)] - b[(0, i)]).powi(2)).sum::<f64>().sqrt();
            prop_assert!((d(&a, &b) - oracle).abs() < 1e-12);
        }
    }
}
