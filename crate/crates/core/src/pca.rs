//! Exact PCA from the population covariance matrix, via a cyclic Jacobi
//! eigensolver.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::reducer::Reducer;

/// Eigen-decomposition of a symmetric matrix: eigenvalues descending, with
/// eigenvectors as the rows of the returned matrix.
pub fn symmetric_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::dim("symmetric eigenproblem columns", n, a.cols()));
    }
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let scale = m.as_slice().iter().fold(0.0f64, |s, x| s.max(x.abs()));
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off <= (f64::EPSILON * scale).powi(2) || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                // smaller root of t² + 2θt − 1 = 0; signum(0) = 1 gives t = 1
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                rotate(&mut m, &mut v, p, q, c, s);
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]).then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (r, &i) in order.iter().enumerate() {
        // column i of the accumulated rotation is eigenvector i
        for k in 0..n {
            vectors.row_mut(r)[k] = v[(k, i)];
        }
    }
    Ok((values, vectors))
}

/// Applies the Jacobi rotation J(p, q) as `m ← Jᵀ m J`, `v ← v J`.
fn rotate(m: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = m.rows();
    for k in 0..n {
        let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
        m.row_mut(k)[p] = c * mkp - s * mkq;
        m.row_mut(k)[q] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
        m.row_mut(p)[k] = c * mpk - s * mqk;
        m.row_mut(q)[k] = s * mpk + c * mqk;
    }
    for k in 0..n {
        let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
        v.row_mut(k)[p] = c * vkp - s * vkq;
        v.row_mut(k)[q] = s * vkp + c * vkq;
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// latent_dim × input_dim, orthonormal rows.
    pub components: Matrix,
    /// Kept eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// All eigenvalues of the fitted covariance, descending.
    pub all_eigenvalues: Vec<f64>,
}

/// Fits PCA with `latent_dim` components. Each component's entry of largest
/// magnitude is made positive.
pub fn fit_pca(train: &Matrix, latent_dim: usize) -> Result<PcaModel> {
    let d = train.cols();
    if latent_dim == 0 || latent_dim > d {
        return Err(Error::Config(format!(
            "PCA latent_dim {latent_dim} must be in 1..={d}"
        )));
    }
    if train.rows() <= d {
        return Err(Error::Degenerate(format!(
            "PCA needs more rows than features ({} rows, {d} features)",
            train.rows()
        )));
    }
    if !train.is_finite() {
        return Err(Error::Degenerate("PCA input has non-finite values".into()));
    }
    let cov = train.covariance();
    if cov.as_slice().iter().all(|&x| x == 0.0) {
        return Err(Error::Degenerate("PCA input has zero variance (rank 0)".into()));
    }
    let (values, vectors) = symmetric_eigen(&cov)?;
    let mut components = vectors.slice_rows(0, latent_dim);
    for r in 0..latent_dim {
        let row = components.row_mut(r);
        let lead = row.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if lead < 0.0 {
            row.iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(PcaModel {
        mean: train.column_means(),
        eigenvalues: values[..latent_dim].to_vec(),
        all_eigenvalues: values,
        components,
    })
}

impl PcaModel {
    pub fn transform(&self, batch: &Matrix) -> Result<Matrix> {
        let d = self.mean.len();
        if batch.cols() != d {
            return Err(Error::dim("PCA input", d, batch.cols()));
        }
        let k = self.components.rows();
        let mut out = Matrix::zeros(batch.rows(), k);
        let mut centered = vec![0.0; d];
        for (i, row) in batch.row_iter().enumerate() {
            for ((c, &x), &m) in centered.iter_mut().zip(row).zip(&self.mean) {
                *c = x - m;
            }
            for j in 0..k {
                out.row_mut(i)[j] = self.components.row(j).iter().zip(&centered).map(|(a, b)| a * b).sum();
            }
        }
        Ok(out)
    }

    pub fn inverse(&self, latent: &Matrix) -> Result<Matrix> {
        let k = self.components.rows();
        if latent.cols() != k {
            return Err(Error::dim("PCA latent", k, latent.cols()));
        }
        let mut out = Matrix::zeros(latent.rows(), self.mean.len());
        for (i, z) in latent.row_iter().enumerate() {
            let row = out.row_mut(i);
            row.copy_from_slice(&self.mean);
            for (j, &zj) in z.iter().enumerate() {
                for (o, &c) in row.iter_mut().zip(self.components.row(j)) {
                    *o += zj * c;
                }
            }
        }
        Ok(out)
    }
}

impl Reducer for PcaModel {
    fn input_dim(&self) -> usize {
        self.mean.len()
    }

    fn latent_dim(&self) -> usize {
        self.components.rows()
    }

    fn encode(&self, batch: &Matrix) -> Result<Matrix> {
        self.transform(batch)
    }

    fn decode(&self, latent: &Matrix) -> Result<Matrix> {
        self.inverse(latent)
    }
}
