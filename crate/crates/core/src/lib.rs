//! Kernel two-sample testing over embedding tables.
//!
//! The engine answers one question: given finite samples of embedding
//! vectors from two processes, are their output distributions
//! distinguishable? The building blocks are
//!
//! - [`table`] / [`io`]: validated embedding tables and their interchange formats,
//! - [`kernel`]: RBF and linear kernels, the median-heuristic bandwidth, Gram matrices,
//! - [`mmd`]: the unbiased squared MMD estimator,
//! - [`permutation`]: the permutation test built on it,
//! - [`power`]: rejection-rate curves, pairwise MMD matrices and bootstrap intervals,
//! - [`robustness`]: kernel/bandwidth/dimension ablations, PCA, perturbation checks,
//! - [`audit`]: nearest-neighbor memorization audit against a reference corpus.
//!
//! All randomness is derived from a single seed through [`rng::StreamKey`], and
//! parallel code never lets thread scheduling change a result.

pub mod audit;
pub mod error;
pub mod io;
pub mod kernel;
pub mod mmd;
pub mod permutation;
pub mod power;
pub mod rng;
pub mod robustness;
pub mod stats;
pub mod table;

pub use error::{Error, Result};
pub use kernel::{BandwidthRule, Kernel, KernelFamily, KernelMatrix, KernelSpec};
pub use mmd::{mmd_from_gram, mmd_squared_unbiased, MmdEstimate};
pub use permutation::{permutation_test, GramMode, TestConfig, TestResult};
pub use table::{EmbeddingRecord, EmbeddingTable, GroupedDataset};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
