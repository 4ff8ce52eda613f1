use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

/// Largest input dimension for which the covariance is decomposed directly.
pub const DEFAULT_PCA_DIM_CAP: usize = 4096;

/// Principal components fitted by exact eigendecomposition of the sample
/// covariance. Each component's largest-magnitude entry is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k x d`, orthonormal rows.
    pub components: Matrix,
    /// Sample variance (n - 1 denominator) along each component, descending.
    pub explained_variance: Vec<f64>,
}

pub fn fit_pca(features: &FeatureMatrix, k: usize) -> Result<PcaModel> {
    fit_pca_with_cap(features, k, DEFAULT_PCA_DIM_CAP)
}

pub fn fit_pca_with_cap(features: &FeatureMatrix, k: usize, dim_cap: usize) -> Result<PcaModel> {
    let x = features.values();
    let (n, d) = (x.rows(), x.cols());
    if k == 0 || k > n.min(d) {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be in 1..={}",
            n.min(d)
        )));
    }
    if d > dim_cap {
        return Err(Error::InvalidArgument(format!(
            "dimension {d} exceeds the PCA cap {dim_cap}"
        )));
    }

    let mut mean = vec![0.0; d];
    for row in x.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for row in x.iter_rows() {
        for j in 0..d {
            centered[j] = row[j] - mean[j];
        }
        for a in 0..d {
            let ca = centered[a];
            if ca == 0.0 {
                continue;
            }
            for b in a..d {
                cov[(a, b)] += ca * centered[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    // stable sort keeps equal eigenvalues in solver order
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let top = eig.eigenvalues[order[0]];
    if top <= 0.0 {
        return Err(Error::InvalidArgument(
            "zero-variance input has no principal subspace".into(),
        ));
    }

    let mut components = Matrix::zeros(k, d);
    let mut explained = Vec::with_capacity(k);
    for (i, &j) in order.iter().take(k).enumerate() {
        let col = eig.eigenvectors.column(j);
        let mut pivot = 0;
        for t in 1..d {
            if col[t].abs() > col[pivot].abs() {
                pivot = t;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for t in 0..d {
            components.set(i, t, sign * col[t]);
        }
        // round-off can leave tiny negative eigenvalues
        let lambda = eig.eigenvalues[j];
        explained.push(if lambda.abs() <= 1e-12 * top { 0.0 } else { lambda.max(0.0) });
    }

    Ok(PcaModel {
        mean,
        components,
        explained_variance: explained,
    })
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.rows()
    }

    /// Projects features onto the components; provenance gains `+pca{k}`.
    pub fn apply(&self, features: &FeatureMatrix) -> Result<FeatureMatrix> {
        let d = self.mean.len();
        if features.cols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: features.cols(),
            });
        }
        let k = self.k();
        let mut out = Matrix::zeros(features.rows(), k);
        let mut centered = vec![0.0; d];
        for (r, row) in features.values().iter_rows().enumerate() {
            for j in 0..d {
                centered[j] = row[j] - self.mean[j];
            }
            for c in 0..k {
                out.set(r, c, dot(&centered, self.components.row(c)));
            }
        }
        FeatureMatrix::new(out, format!("{}+pca{k}", features.provenance()))
    }

    /// Maps projected coordinates back to the input space.
    pub fn inverse_transform(&self, projected: &Matrix) -> Result<Matrix> {
        let k = self.k();
        if projected.cols() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: projected.cols(),
            });
        }
        let d = self.mean.len();
        let mut out = Matrix::zeros(projected.rows(), d);
        for r in 0..projected.rows() {
            let z = projected.row(r);
            let row = out.row_mut(r);
            row.copy_from_slice(&self.mean);
            for c in 0..k {
                let comp = self.components.row(c);
                for j in 0..d {
                    row[j] += z[c] * comp[j];
                }
            }
        }
        Ok(out)
    }
}
