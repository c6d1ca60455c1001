//! Loss terms and their gradients.
//!
//! Every `*_grad` function returns the loss value together with its gradient
//! with respect to the model output it consumes; the plain functions return
//! only the value.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{DistanceLoss, ForwardBundle, ModelSpec, OutputGrads, Variant};

/// Weight factors of the loss components.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossWeights {
    pub recon: f64,
    pub cov: f64,
    pub dist: f64,
    pub kl: f64,
}

impl LossWeights {
    /// Reconstruction and distance weights fixed at 1; the annealed
    /// regularizer (covariance or KL, depending on the variant) gets
    /// `anneal_weight`.
    pub fn for_variant(variant: Variant, anneal_weight: f64) -> Self {
        LossWeights {
            recon: 1.0,
            cov: if variant.has_cov_loss() { anneal_weight } else { 0.0 },
            dist: if variant == Variant::Diresa { 1.0 } else { 0.0 },
            kl: if variant == Variant::Vae { anneal_weight } else { 0.0 },
        }
    }
}

/// Unweighted loss components of one batch. Components a variant does not
/// use are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossComponents {
    pub recon: f64,
    pub cov: Option<f64>,
    pub dist: Option<f64>,
    pub kl: Option<f64>,
    /// Set when a correlation distance loss was undefined for this batch
    /// (zero variance) and its term was dropped.
    pub dist_skipped: bool,
}

impl LossComponents {
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        w.recon * self.recon
            + self.cov.map_or(0.0, |c| w.cov * c)
            + self.dist.map_or(0.0, |d| w.dist * d)
            + self.kl.map_or(0.0, |k| w.kl * k)
    }
}

fn same_shape(a: &Matrix, b: &Matrix, what: &str) -> Result<()> {
    if a.rows() != b.rows() {
        return Err(Error::dim(format!("{what} rows"), a.rows(), b.rows()));
    }
    if a.cols() != b.cols() {
        return Err(Error::dim(format!("{what} columns"), a.cols(), b.cols()));
    }
    Ok(())
}

/// Mean over all elements of the squared difference.
pub fn loss_recon(x: &Matrix, x_hat: &Matrix) -> Result<f64> {
    loss_recon_grad(x, x_hat).map(|(l, _)| l)
}

/// Reconstruction loss and its gradient with respect to `x_hat`.
pub fn loss_recon_grad(x: &Matrix, x_hat: &Matrix) -> Result<(f64, Matrix)> {
    same_shape(x, x_hat, "reconstruction")?;
    let n = x.as_slice().len().max(1) as f64;
    let mut g = Matrix::zeros(x.rows(), x.cols());
    let mut s = 0.0;
    for ((gv, &a), &b) in g.as_mut_slice().iter_mut().zip(x.as_slice()).zip(x_hat.as_slice()) {
        let d = b - a;
        s += d * d;
        *gv = 2.0 * d / n;
    }
    Ok((s / n, g))
}

/// `Σ_{i≠j} cov²_ij(z) / (L(L−1))` with population covariance over the batch.
pub fn loss_cov(z: &Matrix) -> Result<f64> {
    loss_cov_grad(z).map(|(l, _)| l)
}

pub fn loss_cov_grad(z: &Matrix) -> Result<(f64, Matrix)> {
    let (b, l) = (z.rows(), z.cols());
    if l < 2 {
        return Err(Error::Undefined(format!(
            "covariance loss needs at least 2 latent dimensions, got {l}"
        )));
    }
    if b < 2 {
        return Err(Error::DegenerateBatch(format!(
            "covariance loss needs at least 2 rows, got {b}"
        )));
    }
    let means = z.column_means();
    let mut centered = z.clone();
    for row in centered.as_mut_slice().chunks_exact_mut(l) {
        for (v, m) in row.iter_mut().zip(&means) {
            *v -= m;
        }
    }
    let bf = b as f64;
    let mut cov = vec![0.0; l * l];
    for row in centered.row_iter() {
        for i in 0..l {
            for j in 0..l {
                cov[i * l + j] += row[i] * row[j];
            }
        }
    }
    for c in &mut cov {
        *c /= bf;
    }
    let norm = (l * (l - 1)) as f64;
    let mut loss = 0.0;
    for i in 0..l {
        for j in 0..l {
            if i != j {
                loss += cov[i * l + j] * cov[i * l + j];
            }
        }
    }
    loss /= norm;
    // dL/dz_bk = (2/B) Σ_{j≠k} g_kj c_bj with g_kj = 2 cov_kj / (L(L−1)).
    let mut grad = Matrix::zeros(b, l);
    for (gr, cr) in grad.as_mut_slice().chunks_exact_mut(l).zip(centered.row_iter()) {
        for k in 0..l {
            let mut acc = 0.0;
            for j in 0..l {
                if j != k {
                    acc += 2.0 * cov[k * l + j] / norm * cr[j];
                }
            }
            gr[k] = 2.0 * acc / bf;
        }
    }
    Ok((loss, grad))
}

/// Pearson correlation of `a` and `b` and its gradient with respect to `b`.
fn pearson_grad_b(a: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = a.len();
    if n < 2 {
        return Err(Error::DegenerateBatch(format!(
            "correlation needs at least 2 distances, got {n}"
        )));
    }
    let nf = n as f64;
    let ma = a.iter().sum::<f64>() / nf;
    let mb = b.iter().sum::<f64>() / nf;
    let ca: Vec<f64> = a.iter().map(|v| v - ma).collect();
    let cb: Vec<f64> = b.iter().map(|v| v - mb).collect();
    let saa: f64 = ca.iter().map(|v| v * v).sum();
    let sbb: f64 = cb.iter().map(|v| v * v).sum();
    if !(saa > 0.0) || !(sbb > 0.0) {
        return Err(Error::DegenerateBatch("distance vector has zero variance".into()));
    }
    let sab: f64 = ca.iter().zip(&cb).map(|(x, y)| x * y).sum();
    let na = libm::sqrt(saa);
    let nb = libm::sqrt(sbb);
    let r = sab / (na * nb);
    let grad = ca
        .iter()
        .zip(&cb)
        .map(|(x, y)| x / (na * nb) - r * y / sbb)
        .collect();
    Ok((r, grad))
}

/// Distance loss between input-space and latent-space pair distances.
pub fn loss_dist(d_x: &[f64], d_z: &[f64], kind: DistanceLoss) -> Result<f64> {
    loss_dist_grad(d_x, d_z, kind).map(|(l, _)| l)
}

/// Distance loss and its gradient with respect to `d_z`.
pub fn loss_dist_grad(d_x: &[f64], d_z: &[f64], kind: DistanceLoss) -> Result<(f64, Vec<f64>)> {
    if d_x.len() != d_z.len() {
        return Err(Error::dim("distance vectors", d_x.len(), d_z.len()));
    }
    let n = d_x.len();
    if n == 0 {
        return Err(Error::DegenerateBatch("empty distance vectors".into()));
    }
    let nf = n as f64;
    match kind {
        DistanceLoss::Mse => {
            let mut s = 0.0;
            let g = d_x
                .iter()
                .zip(d_z)
                .map(|(&x, &z)| {
                    let d = z - x;
                    s += d * d;
                    2.0 * d / nf
                })
                .collect();
            Ok((s / nf, g))
        }
        DistanceLoss::Msle => {
            let mut s = 0.0;
            let g = d_x
                .iter()
                .zip(d_z)
                .map(|(&x, &z)| {
                    let d = libm::log1p(z) - libm::log1p(x);
                    s += d * d;
                    2.0 * d / (nf * (1.0 + z))
                })
                .collect();
            Ok((s / nf, g))
        }
        DistanceLoss::Corr => {
            let (r, dr) = pearson_grad_b(d_x, d_z)?;
            Ok((1.0 - r, dr.into_iter().map(|v| -v).collect()))
        }
        DistanceLoss::LogCorr => {
            let lx: Vec<f64> = d_x.iter().map(|&v| libm::log1p(v)).collect();
            let lz: Vec<f64> = d_z.iter().map(|&v| libm::log1p(v)).collect();
            let (r, dr) = pearson_grad_b(&lx, &lz)?;
            Ok((
                1.0 - r,
                dr.into_iter().zip(d_z).map(|(v, &z)| -v / (1.0 + z)).collect(),
            ))
        }
    }
}

/// `−½ · mean_batch Σ_dim (1 + logvar − mean² − exp(logvar))`.
pub fn loss_kl(mean: &Matrix, logvar: &Matrix) -> Result<f64> {
    loss_kl_grad(mean, logvar).map(|(l, _, _)| l)
}

/// KL loss with gradients with respect to the mean and log-variance heads.
pub fn loss_kl_grad(mean: &Matrix, logvar: &Matrix) -> Result<(f64, Matrix, Matrix)> {
    same_shape(mean, logvar, "KL inputs")?;
    if let Some(i) = mean.first_non_finite().or_else(|| logvar.first_non_finite()) {
        return Err(Error::Divergence {
            context: "KL loss input".into(),
            index: i,
        });
    }
    let b = mean.rows().max(1) as f64;
    let mut gm = Matrix::zeros(mean.rows(), mean.cols());
    let mut gl = Matrix::zeros(mean.rows(), mean.cols());
    let mut s = 0.0;
    for (((&m, &lv), gmv), glv) in mean
        .as_slice()
        .iter()
        .zip(logvar.as_slice())
        .zip(gm.as_mut_slice())
        .zip(gl.as_mut_slice())
    {
        let e = libm::exp(lv);
        s += 1.0 + lv - m * m - e;
        *gmv = m / b;
        *glv = -0.5 * (1.0 - e) / b;
    }
    Ok((-0.5 * s / b, gm, gl))
}

fn active_components(spec: &ModelSpec) -> (bool, bool, bool) {
    let v = spec.variant;
    (v.has_cov_loss(), v == Variant::Diresa, v == Variant::Vae)
}

/// Weighted total loss of a forward bundle.
pub fn total_loss(
    bundle: &ForwardBundle,
    batch: &Matrix,
    weights: &LossWeights,
    spec: &ModelSpec,
) -> Result<(f64, LossComponents)> {
    total_loss_grad(bundle, batch, weights, spec).map(|(t, c, _)| (t, c))
}

/// Weighted total loss and its gradient with respect to the bundle outputs.
pub fn total_loss_grad(
    bundle: &ForwardBundle,
    batch: &Matrix,
    weights: &LossWeights,
    spec: &ModelSpec,
) -> Result<(f64, LossComponents, OutputGrads)> {
    let (use_cov, use_dist, use_kl) = active_components(spec);
    let (recon, mut g_recon) = loss_recon_grad(batch, &bundle.reconstruction)?;
    scale(g_recon.as_mut_slice(), weights.recon);
    let mut comps = LossComponents {
        recon,
        ..LossComponents::default()
    };
    let mut grads = OutputGrads {
        reconstruction: g_recon,
        latent: None,
        twin_latent: None,
        vae_mean: None,
        vae_logvar: None,
    };
    if use_cov {
        let (c, mut g) = loss_cov_grad(&bundle.latent)?;
        scale(g.as_mut_slice(), weights.cov);
        comps.cov = Some(c);
        grads.latent = Some(g);
    }
    if use_dist {
        let kind = spec
            .distance_loss
            .ok_or_else(|| Error::Config("DIRESA spec lacks a distance loss".into()))?;
        let (d_x, d_z, twin) = match (&bundle.d_x, &bundle.d_z, &bundle.twin_latent) {
            (Some(a), Some(b), Some(t)) => (a, b, t),
            _ => return Err(Error::Structural("DIRESA bundle lacks distances".into())),
        };
        match loss_dist_grad(d_x, d_z, kind) {
            Ok((d, g_dz)) => {
                comps.dist = Some(d);
                let z = &bundle.latent;
                let mut gz = Matrix::zeros(z.rows(), z.cols());
                let mut gt = Matrix::zeros(z.rows(), z.cols());
                for i in 0..z.rows() {
                    if d_z[i] == 0.0 {
                        continue;
                    }
                    let f = weights.dist * g_dz[i] / d_z[i];
                    for k in 0..z.cols() {
                        let diff = z[(i, k)] - twin[(i, k)];
                        gz[(i, k)] = f * diff;
                        gt[(i, k)] = -f * diff;
                    }
                }
                match &mut grads.latent {
                    Some(g) => {
                        for (a, b) in g.as_mut_slice().iter_mut().zip(gz.as_slice()) {
                            *a += b;
                        }
                    }
                    None => grads.latent = Some(gz),
                }
                grads.twin_latent = Some(gt);
            }
            Err(Error::DegenerateBatch(_)) if kind.is_correlation() => {
                comps.dist_skipped = true;
            }
            Err(e) => return Err(e),
        }
    }
    if use_kl {
        let (mean, logvar) = match (&bundle.vae_mean, &bundle.vae_logvar) {
            (Some(m), Some(l)) => (m, l),
            _ => return Err(Error::Structural("VAE bundle lacks mean/log-variance".into())),
        };
        let (k, mut gm, mut gl) = loss_kl_grad(mean, logvar)?;
        scale(gm.as_mut_slice(), weights.kl);
        scale(gl.as_mut_slice(), weights.kl);
        comps.kl = Some(k);
        grads.vae_mean = Some(gm);
        grads.vae_logvar = Some(gl);
    }
    let total = comps.weighted_total(weights);
    if !total.is_finite() {
        return Err(Error::Divergence {
            context: "total loss".into(),
            index: 0,
        });
    }
    Ok((total, comps, grads))
}

fn scale(v: &mut [f64], w: f64) {
    if w != 1.0 {
        for x in v {
            *x *= w;
        }
    }
}
