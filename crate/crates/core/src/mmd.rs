//! Unbiased squared maximum mean discrepancy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{check_dims, Kernel, KernelMatrix, KernelSource, KernelSpec};

/// An MMD²_u value. May be negative in finite samples; never clamped here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdEstimate {
    pub value: f64,
    pub m: usize,
    pub n: usize,
    pub kernel: Kernel,
}

/// Two sample slices viewed as one pooled index space `0..m+n`.
pub(crate) struct TwoSample<'a> {
    pub x: &'a [Vec<f64>],
    pub y: &'a [Vec<f64>],
    pub kernel: Kernel,
}

impl TwoSample<'_> {
    #[inline]
    fn point(&self, i: usize) -> &[f64] {
        if i < self.x.len() {
            &self.x[i]
        } else {
            &self.y[i - self.x.len()]
        }
    }
}

impl KernelSource for TwoSample<'_> {
    fn len(&self) -> usize {
        self.x.len() + self.y.len()
    }

    #[inline]
    fn value(&self, i: usize, j: usize) -> f64 {
        self.kernel.eval(self.point(i), self.point(j))
    }
}

/// The U-statistic over positions in `idx_x` / `idx_y`.
///
/// Within-sample sums skip equal *positions*, not equal indices, so a
/// resampled list with repeated indices is handled like a bootstrap sample.
/// Summation runs row-major over the index lists in the given order; the
/// cross term's outer loop is the list holding the smallest index, which
/// makes the result exactly symmetric in its two arguments.
pub(crate) fn mmd_from_source<S: KernelSource + ?Sized>(
    src: &S,
    idx_x: &[usize],
    idx_y: &[usize],
) -> f64 {
    let m = idx_x.len() as f64;
    let n = idx_y.len() as f64;
    let min_x = idx_x.iter().min();
    let min_y = idx_y.iter().min();
    let cross_sum = if min_x <= min_y {
        cross(src, idx_x, idx_y)
    } else {
        cross(src, idx_y, idx_x)
    };
    within(src, idx_x) / (m * (m - 1.0)) + within(src, idx_y) / (n * (n - 1.0))
        - 2.0 * cross_sum / (m * n)
}

#[inline]
fn within<S: KernelSource + ?Sized>(src: &S, idx: &[usize]) -> f64 {
    let mut s = 0.0;
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            if a != b {
                s += src.value(i, j);
            }
        }
    }
    s
}

#[inline]
fn cross<S: KernelSource + ?Sized>(src: &S, idx_x: &[usize], idx_y: &[usize]) -> f64 {
    let mut s = 0.0;
    for &i in idx_x {
        for &j in idx_y {
            s += src.value(i, j);
        }
    }
    s
}

fn check_sizes(m: usize, n: usize) -> Result<()> {
    if m < 2 || n < 2 {
        return Err(Error::SampleTooSmall(format!(
            "unbiased MMD needs at least 2 items per sample, got m={m}, n={n}"
        )));
    }
    Ok(())
}

/// MMD²_u of `x` against `y` with the bandwidth resolved on the pooled sample.
pub fn mmd_squared_unbiased(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    spec: &KernelSpec,
) -> Result<MmdEstimate> {
    check_sizes(x.len(), y.len())?;
    let pooled: Vec<Vec<f64>> = x.iter().chain(y).cloned().collect();
    check_dims(&pooled)?;
    let kernel = spec.resolve(&pooled)?;
    mmd_with_kernel(x, y, kernel)
}

/// MMD²_u with an already-bound kernel.
pub fn mmd_with_kernel(x: &[Vec<f64>], y: &[Vec<f64>], kernel: Kernel) -> Result<MmdEstimate> {
    let (m_in, n_in) = (x.len(), y.len());
    check_sizes(m_in, n_in)?;
    let dx = check_dims(x)?;
    let dy = check_dims(y)?;
    if dx != dy {
        return Err(Error::DimensionMismatch(dx, dy));
    }
    // Canonical argument order keeps the estimate bit-symmetric.
    let (x, y) = if lex_less(y, x) { (y, x) } else { (x, y) };
    let (m, n) = (x.len(), y.len());
    let src = TwoSample { x, y, kernel };
    let idx_x: Vec<usize> = (0..m).collect();
    let idx_y: Vec<usize> = (m..m + n).collect();
    Ok(MmdEstimate {
        value: mmd_from_source(&src, &idx_x, &idx_y),
        m: m_in,
        n: n_in,
        kernel,
    })
}

fn lex_less(a: &[Vec<f64>], b: &[Vec<f64>]) -> bool {
    for (u, v) in a.iter().zip(b) {
        for (p, q) in u.iter().zip(v) {
            match p.total_cmp(q) {
                std::cmp::Ordering::Less => return true,
                std::cmp::Ordering::Greater => return false,
                std::cmp::Ordering::Equal => {}
            }
        }
    }
    a.len() < b.len()
}

/// MMD²_u between two disjoint index sets of a precomputed Gram matrix.
pub fn mmd_from_gram(g: &KernelMatrix, idx_x: &[usize], idx_y: &[usize]) -> Result<MmdEstimate> {
    check_sizes(idx_x.len(), idx_y.len())?;
    let len = g.size();
    let mut owner = vec![0u8; len];
    for (side, idx) in [(1u8, idx_x), (2u8, idx_y)] {
        for &i in idx {
            if i >= len {
                return Err(Error::IndexOutOfRange { index: i, len });
            }
            if owner[i] != 0 && owner[i] != side {
                return Err(Error::OverlappingIndices(i));
            }
            owner[i] = side;
        }
    }
    Ok(MmdEstimate {
        value: mmd_from_source(g, idx_x, idx_y),
        m: idx_x.len(),
        n: idx_y.len(),
        kernel: g.kernel(),
    })
}
