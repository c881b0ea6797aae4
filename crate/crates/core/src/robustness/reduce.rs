//! Deterministic PCA reducer.
//!
//! Vectors reduced upstream (for example by UMAP in the extraction tooling)
//! come in through [`ReducerMethod::External`], which passes them through.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::check_dims;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReducerMethod {
    Pca,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReducerSpec {
    pub method: ReducerMethod,
    pub target_dim: usize,
}

impl ReducerSpec {
    pub fn pca(target_dim: usize) -> Self {
        Self {
            method: ReducerMethod::Pca,
            target_dim,
        }
    }
}

/// A fitted principal-component projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    mean: Vec<f64>,
    /// `target_dim` unit rows, each of input length.
    components: Vec<Vec<f64>>,
    /// All covariance eigenvalues, descending.
    eigenvalues: Vec<f64>,
}

impl Pca {
    /// Fits on `data` (rows are observations).
    ///
    /// Components are eigenvectors of the sample covariance in descending
    /// eigenvalue order. Each component's sign is fixed so that its
    /// largest-magnitude loading is positive.
    pub fn fit(data: &[Vec<f64>], target_dim: usize) -> Result<Self> {
        let n = data.len();
        let d = check_dims(data)?;
        if n < 2 {
            return Err(Error::SampleTooSmall("PCA needs at least two rows".into()));
        }
        if target_dim == 0 || target_dim > d {
            return Err(Error::InvalidParameter(format!(
                "target dimension {target_dim} must lie in 1..={d}"
            )));
        }
        if target_dim >= n {
            return Err(Error::InvalidParameter(format!(
                "target dimension {target_dim} must be below the pooled sample count {n}"
            )));
        }

        let mut mean = vec![0.0; d];
        for row in data {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);

        let centered = DMatrix::from_fn(n, d, |i, j| data[i][j] - mean[j]);
        let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
        let eig = SymmetricEigen::new(cov);

        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .total_cmp(&eig.eigenvalues[a])
                .then(a.cmp(&b))
        });
        let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let components = order
            .iter()
            .take(target_dim)
            .map(|&k| {
                let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
                let pivot = v
                    .iter()
                    .enumerate()
                    .fold((0usize, 0.0f64), |best, (i, x)| {
                        if x.abs() > best.1 {
                            (i, x.abs())
                        } else {
                            best
                        }
                    })
                    .0;
                if v[pivot] < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
                v
            })
            .collect();
        Ok(Self {
            mean,
            components,
            eigenvalues,
        })
    }

    pub fn transform(&self, data: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let d = self.mean.len();
        data.iter()
            .map(|row| {
                if row.len() != d {
                    return Err(Error::DimensionMismatch(d, row.len()));
                }
                Ok(self
                    .components
                    .iter()
                    .map(|c| {
                        c.iter()
                            .zip(row.iter().zip(&self.mean))
                            .map(|(w, (x, m))| w * (x - m))
                            .sum()
                    })
                    .collect())
            })
            .collect()
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }
}

/// Projects `pooled` to `spec.target_dim` dimensions, fitting on `pooled`
/// itself. `External` returns the input unchanged after checking its width.
pub fn reduce(pooled: &[Vec<f64>], spec: &ReducerSpec) -> Result<Vec<Vec<f64>>> {
    match spec.method {
        ReducerMethod::Pca => Pca::fit(pooled, spec.target_dim)?.transform(pooled),
        ReducerMethod::External => {
            let d = check_dims(pooled)?;
            if d != spec.target_dim {
                return Err(Error::DimensionMismatch(spec.target_dim, d));
            }
            Ok(pooled.to_vec())
        }
    }
}
