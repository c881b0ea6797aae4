//! How much MMD²_u moves when the embedding is compressed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{check_dims, KernelSpec};
use crate::mmd::mmd_squared_unbiased;
use crate::rng::{partial_shuffle, StreamKey};
use crate::stats::{mean, std_dev};

use super::reduce::Pca;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub full_dim: usize,
    pub dims: Vec<usize>,
    pub mean_abs_dev: Vec<f64>,
    pub std_abs_dev: Vec<f64>,
    pub trials: usize,
    pub sample_size: usize,
    /// `deviations[k][t]` is |full - reduced| at `dims[k]` in trial `t`.
    pub deviations: Vec<Vec<f64>>,
}

fn draw(points: &[Vec<f64>], k: usize, key: StreamKey) -> Vec<Vec<f64>> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    partial_shuffle(&mut key.rng(), &mut order, k);
    order[..k].iter().map(|&i| points[i].clone()).collect()
}

/// For each trial, draws `sample_size` items from each of `x` and `y`,
/// computes MMD²_u in the full space and after PCA to each target dimension
/// (fit on the pooled trial sample, bandwidth re-resolved in each space),
/// and records the absolute deviation.
pub fn stability_analysis(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    dims: &[usize],
    trials: usize,
    sample_size: usize,
    spec: &KernelSpec,
    seed: u64,
) -> Result<StabilityReport> {
    let full_dim = check_dims(x)?;
    if check_dims(y)? != full_dim {
        return Err(Error::DimensionMismatch(full_dim, check_dims(y)?));
    }
    if sample_size < 2 || sample_size > x.len() || sample_size > y.len() {
        return Err(Error::SampleTooSmall(format!(
            "sample size {sample_size} needs 2 <= size <= min({}, {})",
            x.len(),
            y.len()
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    for &d in dims {
        if d == 0 || d > full_dim {
            return Err(Error::InvalidParameter(format!(
                "target dimension {d} must lie in 1..={full_dim}"
            )));
        }
        if d >= 2 * sample_size {
            return Err(Error::InvalidParameter(format!(
                "target dimension {d} must be below the pooled sample count {}",
                2 * sample_size
            )));
        }
    }

    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let key = StreamKey::new(seed, "stability").index(t as u64);
            let xs = draw(x, sample_size, key.clone().label("x"));
            let ys = draw(y, sample_size, key.label("y"));
            let full = mmd_squared_unbiased(&xs, &ys, spec)?.value;
            let pooled: Vec<Vec<f64>> = xs.iter().chain(&ys).cloned().collect();
            dims.iter()
                .map(|&d| {
                    let reduced = Pca::fit(&pooled, d)?.transform(&pooled)?;
                    let (rx, ry) = reduced.split_at(sample_size);
                    Ok((full - mmd_squared_unbiased(rx, ry, spec)?.value).abs())
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let deviations: Vec<Vec<f64>> = (0..dims.len())
        .map(|k| per_trial.iter().map(|row| row[k]).collect())
        .collect();
    Ok(StabilityReport {
        full_dim,
        dims: dims.to_vec(),
        mean_abs_dev: deviations.iter().map(|d| mean(d)).collect(),
        std_abs_dev: deviations.iter().map(|d| std_dev(d)).collect(),
        trials,
        sample_size,
        deviations,
    })
}
