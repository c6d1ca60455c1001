//! Post-hoc analysis of latent components: ordering by the variance each
//! component induces in the decoded space, explained variance, and the
//! decoded effect of a ±1 standard deviation change of one component.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{mean_squared_error, Matrix};
use crate::metrics;
use crate::reducer::Reducer;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ComponentOrdering {
    /// Latent indices, most important first.
    pub permutation: Vec<usize>,
    /// Decoded variance summed over features, indexed by latent component.
    pub decoded_variance: Vec<f64>,
    /// `decoded_variance / total_variance`, indexed by latent component.
    pub explained_fraction: Vec<f64>,
    pub unexplained_fraction: f64,
    /// Data variance summed over features.
    pub total_variance: f64,
}

fn encode_checked(model: &impl Reducer, split: &Matrix) -> Result<Matrix> {
    if split.rows() == 0 {
        return Err(Error::Config("latent analysis needs a nonempty split".into()));
    }
    let z = model.encode(split)?;
    if let Some(i) = z.first_non_finite() {
        return Err(Error::Degenerate(format!(
            "encoded split has a non-finite value at flat index {i}"
        )));
    }
    Ok(z)
}

/// Latent matrix with every component at its mean except `j`, which keeps
/// its encoded values.
fn pinned_except(z: &Matrix, means: &[f64], j: usize) -> Matrix {
    let mut out = z.clone();
    for r in 0..out.rows() {
        for (c, v) in out.row_mut(r).iter_mut().enumerate() {
            if c != j {
                *v = means[c];
            }
        }
    }
    out
}

/// Orders latent components by decoded-space variance, descending (ties by
/// index). The unexplained fraction is the summed squared reconstruction
/// error per sample over the summed data variance, i.e. the reconstruction
/// MSE over the mean per-feature variance.
pub fn order_components(model: &impl Reducer, split: &Matrix) -> Result<ComponentOrdering> {
    let z = encode_checked(model, split)?;
    let total_variance: f64 = split.column_variances().iter().sum();
    if !(total_variance > 0.0) {
        return Err(Error::Degenerate("split has zero total variance".into()));
    }
    let means = z.column_means();
    let mut decoded_variance = Vec::with_capacity(z.cols());
    for j in 0..z.cols() {
        let x = model.decode(&pinned_except(&z, &means, j))?;
        decoded_variance.push(x.column_variances().iter().sum::<f64>());
    }
    let mut permutation: Vec<usize> = (0..z.cols()).collect();
    permutation.sort_by(|&a, &b| decoded_variance[b].total_cmp(&decoded_variance[a]).then(a.cmp(&b)));
    let recon = model.decode(&z)?;
    let mse = mean_squared_error(split, &recon)?;
    Ok(ComponentOrdering {
        permutation,
        explained_fraction: decoded_variance.iter().map(|v| v / total_variance).collect(),
        decoded_variance,
        unexplained_fraction: mse * split.cols() as f64 / total_variance,
        total_variance,
    })
}

/// Per-component explained fractions and the unexplained fraction.
pub fn explained_variance(model: &impl Reducer, split: &Matrix) -> Result<(Vec<f64>, f64)> {
    let o = order_components(model, split)?;
    Ok((o.explained_fraction, o.unexplained_fraction))
}

/// Decoded difference between component `j` at `mean + sign·σ` and at
/// `mean − sign·σ`, all other components at their means. `sign` is ±1.
pub fn component_delta_signed(model: &impl Reducer, split: &Matrix, j: usize, sign: f64) -> Result<Vec<f64>> {
    let z = encode_checked(model, split)?;
    if j >= z.cols() {
        return Err(Error::OutOfRange {
            context: "latent component".into(),
            index: j,
            len: z.cols(),
        });
    }
    let means = z.column_means();
    let sigma = libm::sqrt(z.column_variances()[j]);
    if sigma == 0.0 {
        return Ok(vec![0.0; model.input_dim()]);
    }
    let mut plus = means.clone();
    let mut minus = means;
    plus[j] += sign * sigma;
    minus[j] -= sign * sigma;
    let both = Matrix::from_rows(&[plus, minus])?;
    let x = model.decode(&both)?;
    Ok(x.row(0).iter().zip(x.row(1)).map(|(a, b)| a - b).collect())
}

/// `decode(μ with μ_j + σ_j) − decode(μ with μ_j − σ_j)`; a zero vector when
/// σ_j = 0.
pub fn decoded_component_delta(model: &impl Reducer, split: &Matrix, j: usize) -> Result<Vec<f64>> {
    component_delta_signed(model, split, j, 1.0)
}

/// (original, latent) distance pairs from each anchor to its `l`
/// latent-nearest neighbours, anchor by anchor, nearest first.
pub fn scatter_points(data: &Matrix, latent: &Matrix, anchors: &[usize], l: usize) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(anchors.len() * l);
    for &a in anchors {
        let d = metrics::distances_from(data, latent, a)?;
        out.extend(metrics::latent_neighbours(&d.d_lat, l).into_iter().map(|i| (d.d_orig[i], d.d_lat[i])));
    }
    Ok(out)
}
