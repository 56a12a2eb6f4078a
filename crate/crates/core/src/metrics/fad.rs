use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::similarity::EmbeddingSet;
use crate::error::{Error, Result};

/// Ridge added to covariances of sets no larger than their dimension.
pub const COV_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadResult {
    pub value: f64,
    /// True when either covariance needed the ridge.
    pub regularized: bool,
}

/// Sample mean and unbiased covariance (zero for a single vector).
pub fn gaussian_stats(set: &EmbeddingSet) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = set.dim().ok_or_else(|| Error::domain("empty embedding set"))?;
    let n = set.len();
    let mut mu = DVector::zeros(d);
    for v in &set.vectors {
        mu += DVector::from_column_slice(v);
    }
    mu /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    if n > 1 {
        for v in &set.vectors {
            let c = DVector::from_column_slice(v) - &mu;
            cov += &c * c.transpose();
        }
        cov /= (n - 1) as f64;
    }
    Ok((mu, cov))
}

/// Principal square root of a symmetric PSD matrix; negative eigenvalues
/// are clamped to zero.
pub fn sqrtm_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}

/// `Tr((Σa^½ Σb Σa^½)^½)`, evaluated in the eigenbasis of `Σa` so that
/// near-singular directions are scaled exactly rather than through a dense
/// product (which costs ~1e-9 absolute accuracy on ridge-sized eigenvalues).
pub fn trace_sqrt_product(cov_a: &DMatrix<f64>, cov_b: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new((cov_a + cov_a.transpose()) * 0.5);
    let v = &eig.eigenvectors;
    let root: Vec<f64> = eig.eigenvalues.iter().map(|x| x.max(0.0).sqrt()).collect();
    let m = v.transpose() * cov_b * v;
    let d = m.nrows();
    let k = DMatrix::from_fn(d, d, |i, j| root[i] * 0.5 * (m[(i, j)] + m[(j, i)]) * root[j]);
    SymmetricEigen::new(k)
        .eigenvalues
        .iter()
        .map(|x| x.max(0.0).sqrt())
        .sum()
}

/// Fréchet distance between Gaussians fit to two embedding sets.
pub fn fad(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<FadResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("FAD needs two non-empty sets"));
    }
    if a.dim() != b.dim() {
        return Err(Error::domain(format!(
            "embedding dimensions differ: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let d = a.dim().unwrap();
    let (mu_a, mut cov_a) = gaussian_stats(a)?;
    let (mu_b, mut cov_b) = gaussian_stats(b)?;
    let mut regularized = false;
    if a.len() <= d {
        cov_a += DMatrix::identity(d, d) * COV_RIDGE;
        regularized = true;
    }
    if b.len() <= d {
        cov_b += DMatrix::identity(d, d) * COV_RIDGE;
        regularized = true;
    }
    let diff = &mu_a - &mu_b;
    let value = diff.dot(&diff) + cov_a.trace() + cov_b.trace() - 2.0 * trace_sqrt_product(&cov_a, &cov_b);
    Ok(FadResult {
        value: value.max(0.0),
        regularized,
    })
}
