//! Checks of the kernel-perturbation bound on MMD²_u.
//!
//! If every entry of an approximate Gram matrix is within ε of the ideal one,
//! the two MMD²_u values differ by at most 4ε. For the Gaussian kernel, a
//! distortion of at most η in every squared pairwise distance moves each
//! kernel entry by at most η/(2σ²), hence MMD²_u by at most 2η/σ².

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{check_dims, gram_bytes, precompute_gram, squared_distance, Kernel, KernelMatrix};
use crate::mmd::mmd_from_gram;

/// Absolute slack added to every bound comparison.
pub const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    /// Largest absolute entrywise Gram difference.
    pub epsilon: f64,
    pub delta_mmd: f64,
    pub bound: f64,
    pub bound_ok: bool,
}

/// Compares MMD²_u under two Gram matrices over the same index split.
pub fn check_perturbation_bound(
    g_ideal: &KernelMatrix,
    g_approx: &KernelMatrix,
    idx_x: &[usize],
    idx_y: &[usize],
) -> Result<BoundCheck> {
    if g_ideal.size() != g_approx.size() || g_ideal.sizes() != g_approx.sizes() {
        return Err(Error::ShapeMismatch(format!(
            "gram matrices of size {} and {}",
            g_ideal.size(),
            g_approx.size()
        )));
    }
    if std::mem::discriminant(&g_ideal.kernel()) != std::mem::discriminant(&g_approx.kernel()) {
        return Err(Error::ShapeMismatch("gram matrices of different kernel families".into()));
    }
    let epsilon = g_ideal
        .values()
        .iter()
        .zip(g_approx.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let ideal = mmd_from_gram(g_ideal, idx_x, idx_y)?.value;
    let approx = mmd_from_gram(g_approx, idx_x, idx_y)?.value;
    let delta_mmd = (approx - ideal).abs();
    let bound = 4.0 * epsilon;
    Ok(BoundCheck {
        epsilon,
        delta_mmd,
        bound,
        bound_ok: delta_mmd <= bound + BOUND_SLACK,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBoundCheck {
    pub sigma: f64,
    /// Largest absolute change in any squared pairwise distance.
    pub eta: f64,
    pub epsilon: f64,
    pub delta_mmd: f64,
    /// `2 * eta / sigma^2`.
    pub bound: f64,
    pub bound_ok: bool,
}

/// Largest |‖aᵢ − aⱼ‖² − ‖bᵢ − bⱼ‖²| over all pairs. The two point sets may
/// live in different dimensions but must have the same length.
pub fn squared_distance_distortion(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} points", a.len(), b.len())));
    }
    check_dims(a)?;
    check_dims(b)?;
    let mut eta: f64 = 0.0;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let da = squared_distance(&a[i], &a[j]);
            let db = squared_distance(&b[i], &b[j]);
            eta = eta.max((da - db).abs());
        }
    }
    Ok(eta)
}

/// Gaussian-kernel check: `ideal` and `distorted` are the same pooled
/// sample (first `m` items are X) before and after a distance-distorting
/// map such as dimension reduction. Both sides use the fixed `sigma`.
pub fn check_gaussian_bound(
    ideal: &[Vec<f64>],
    distorted: &[Vec<f64>],
    m: usize,
    sigma: f64,
) -> Result<GaussianBoundCheck> {
    let kernel = Kernel::rbf(sigma)?;
    let eta = squared_distance_distortion(ideal, distorted)?;
    let total = ideal.len();
    if m > total {
        return Err(Error::ShapeMismatch(format!("m = {m} exceeds {total} points")));
    }
    let sizes = (m, total - m);
    let budget = gram_bytes(total);
    let g_ideal = precompute_gram(kernel, ideal, sizes, budget)?;
    let g_approx = precompute_gram(kernel, distorted, sizes, budget)?;
    let idx_x: Vec<usize> = (0..m).collect();
    let idx_y: Vec<usize> = (m..total).collect();
    let inner = check_perturbation_bound(&g_ideal, &g_approx, &idx_x, &idx_y)?;
    let bound = 2.0 * eta / (sigma * sigma);
    Ok(GaussianBoundCheck {
        sigma,
        eta,
        epsilon: inner.epsilon,
        delta_mmd: inner.delta_mmd,
        bound,
        bound_ok: inner.delta_mmd <= bound + BOUND_SLACK,
    })
}
