//! Kernel functions, bandwidth selection and Gram-matrix precomputation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default memory cap for a precomputed Gram matrix.
pub const DEFAULT_GRAM_BUDGET_BYTES: u64 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Rbf,
    Linear,
}

/// How the RBF bandwidth is chosen. Ignored for the linear kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BandwidthRule {
    /// Median pairwise Euclidean distance of the pooled sample.
    MedianHeuristic,
    Fixed { sigma: f64 },
    /// Median heuristic times `multiplier`.
    ScaledMedian { multiplier: f64 },
}

/// Kernel family plus bandwidth policy, before it has seen any data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: BandwidthRule,
    /// When the median distance is zero, fall back to the smallest positive
    /// pairwise distance (or 1.0 if every point is identical) instead of
    /// failing.
    #[serde(default)]
    pub degenerate_fallback: bool,
}

impl KernelSpec {
    pub fn rbf_median() -> Self {
        Self {
            family: KernelFamily::Rbf,
            bandwidth: BandwidthRule::MedianHeuristic,
            degenerate_fallback: false,
        }
    }

    pub fn rbf_fixed(sigma: f64) -> Self {
        Self {
            family: KernelFamily::Rbf,
            bandwidth: BandwidthRule::Fixed { sigma },
            degenerate_fallback: false,
        }
    }

    pub fn rbf_scaled(multiplier: f64) -> Self {
        Self {
            family: KernelFamily::Rbf,
            bandwidth: BandwidthRule::ScaledMedian { multiplier },
            degenerate_fallback: false,
        }
    }

    pub fn linear() -> Self {
        Self {
            family: KernelFamily::Linear,
            bandwidth: BandwidthRule::MedianHeuristic,
            degenerate_fallback: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.family == KernelFamily::Linear {
            return Ok(());
        }
        match self.bandwidth {
            BandwidthRule::Fixed { sigma } if !(sigma.is_finite() && sigma > 0.0) => {
                Err(Error::InvalidBandwidth(sigma))
            }
            BandwidthRule::ScaledMedian { multiplier }
                if !(multiplier.is_finite() && multiplier > 0.0) =>
            {
                Err(Error::InvalidParameter(format!(
                    "bandwidth multiplier must be finite and positive, got {multiplier}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Binds the bandwidth policy to a pooled sample.
    pub fn resolve(&self, pooled: &[Vec<f64>]) -> Result<Kernel> {
        self.validate()?;
        match self.family {
            KernelFamily::Linear => Ok(Kernel::Linear),
            KernelFamily::Rbf => {
                let sigma = match self.bandwidth {
                    BandwidthRule::Fixed { sigma } => sigma,
                    BandwidthRule::MedianHeuristic => self.median_sigma(pooled)?,
                    BandwidthRule::ScaledMedian { multiplier } => {
                        multiplier * self.median_sigma(pooled)?
                    }
                };
                Kernel::rbf(sigma)
            }
        }
    }

    fn median_sigma(&self, pooled: &[Vec<f64>]) -> Result<f64> {
        match median_heuristic_sigma(pooled) {
            // With every point identical the RBF kernel is 1 for any σ, so 1.0
            // stands in when no positive distance exists.
            Err(Error::DegenerateBandwidth) if self.degenerate_fallback => {
                Ok(min_positive_distance(pooled).unwrap_or(1.0))
            }
            other => other,
        }
    }
}

/// A kernel with its bandwidth fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Kernel {
    Rbf { sigma: f64 },
    Linear,
}

impl Kernel {
    pub fn rbf(sigma: f64) -> Result<Self> {
        if sigma.is_finite() && sigma > 0.0 {
            Ok(Kernel::Rbf { sigma })
        } else {
            Err(Error::InvalidBandwidth(sigma))
        }
    }

    pub fn sigma(&self) -> Option<f64> {
        match *self {
            Kernel::Rbf { sigma } => Some(sigma),
            Kernel::Linear => None,
        }
    }

    /// Unchecked evaluation; callers guarantee equal lengths.
    #[inline]
    pub(crate) fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Kernel::Rbf { sigma } => (-squared_distance(x, y) / (2.0 * sigma * sigma)).exp(),
            Kernel::Linear => dot(x, y),
        }
    }
}

#[inline]
pub fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum()
}

#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `exp(-|x-y|^2 / 2 sigma^2)` for RBF, `<x, y>` for linear.
pub fn kernel_value(kernel: &Kernel, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(x.len(), y.len()));
    }
    Ok(kernel.eval(x, y))
}

fn pairwise_distances(pooled: &[Vec<f64>]) -> Vec<f64> {
    let n = pooled.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(squared_distance(&pooled[i], &pooled[j]).sqrt());
        }
    }
    out
}

/// Median of the C(N,2) unordered pairwise Euclidean distances. An even
/// number of pairs takes the midpoint of the two middle order statistics.
pub fn median_heuristic_sigma(pooled: &[Vec<f64>]) -> Result<f64> {
    if pooled.len() < 2 {
        return Err(Error::SampleTooSmall(
            "median heuristic needs at least two vectors".into(),
        ));
    }
    check_dims(pooled)?;
    let mut d = pairwise_distances(pooled);
    let count = d.len();
    let mid = count / 2;
    let (lower, upper, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    let median = if count % 2 == 1 {
        upper
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (below + upper)
    };
    if median > 0.0 {
        Ok(median)
    } else {
        Err(Error::DegenerateBandwidth)
    }
}

/// Smallest strictly positive pairwise distance, if any pair differs.
pub fn min_positive_distance(pooled: &[Vec<f64>]) -> Option<f64> {
    pairwise_distances(pooled)
        .into_iter()
        .filter(|&d| d > 0.0)
        .min_by(f64::total_cmp)
}

pub(crate) fn check_dims(points: &[Vec<f64>]) -> Result<usize> {
    let dim = points.first().map_or(0, Vec::len);
    match points.iter().find(|p| p.len() != dim) {
        Some(p) => Err(Error::DimensionMismatch(dim, p.len())),
        None => Ok(dim),
    }
}

/// Anything that can report kernel values between pooled indices.
pub trait KernelSource: Sync {
    fn len(&self) -> usize;
    fn value(&self, i: usize, j: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Kernel values evaluated on demand from the vectors.
pub struct OnTheFly<'a> {
    pub points: &'a [Vec<f64>],
    pub kernel: Kernel,
}

impl KernelSource for OnTheFly<'_> {
    fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    fn value(&self, i: usize, j: usize) -> f64 {
        self.kernel.eval(&self.points[i], &self.points[j])
    }
}

/// Dense symmetric Gram matrix over a pooled sample of sizes (m, n).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    values: Vec<f64>,
    size: usize,
    sizes: (usize, usize),
    kernel: Kernel,
}

impl KernelMatrix {
    /// Wraps precomputed values (row-major, `size * size`).
    pub fn from_values(values: Vec<f64>, sizes: (usize, usize), kernel: Kernel) -> Result<Self> {
        let size = sizes.0 + sizes.1;
        if values.len() != size * size {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {size}x{size} matrix",
                values.len()
            )));
        }
        Ok(Self {
            values,
            size,
            sizes,
            kernel,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn sizes(&self) -> (usize, usize) {
        self.sizes
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.size..(i + 1) * self.size]
    }
}

impl KernelSource for KernelMatrix {
    fn len(&self) -> usize {
        self.size
    }

    #[inline]
    fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }
}

pub fn gram_bytes(points: usize) -> u64 {
    (points as u64) * (points as u64) * 8
}

/// Computes the full Gram matrix once. Returns
/// [`Error::GramBudgetExceeded`] when the matrix would not fit in
/// `budget_bytes`; callers then evaluate on the fly.
///
/// Every entry is computed independently (upper triangle, then mirrored), so
/// the result does not depend on how rows are scheduled across threads.
pub fn precompute_gram(
    kernel: Kernel,
    pooled: &[Vec<f64>],
    sizes: (usize, usize),
    budget_bytes: u64,
) -> Result<KernelMatrix> {
    let size = sizes.0 + sizes.1;
    if pooled.len() != size {
        return Err(Error::ShapeMismatch(format!(
            "{} pooled vectors for sizes {:?}",
            pooled.len(),
            sizes
        )));
    }
    check_dims(pooled)?;
    let needed = gram_bytes(size);
    if needed > budget_bytes {
        return Err(Error::GramBudgetExceeded {
            needed_bytes: needed,
            budget_bytes,
        });
    }
    let mut values = vec![0.0f64; size * size];
    values
        .par_chunks_mut(size.max(1))
        .enumerate()
        .for_each(|(i, row)| {
            for (j, slot) in row.iter_mut().enumerate().skip(i) {
                *slot = kernel.eval(&pooled[i], &pooled[j]);
            }
        });
    for i in 0..size {
        for j in 0..i {
            values[i * size + j] = values[j * size + i];
        }
    }
    KernelMatrix::from_values(values, sizes, kernel)
}
