//! Permutation two-sample test on MMD²_u.
//!
//! The pooled sample is relabeled `R` times; each relabeling puts the first
//! `m` shuffled items in X and the rest in Y. The p-value is
//! `(1 + #{stat_r >= observed}) / (R + 1)`, so it is never zero and is at
//! least `1 / (R + 1)`. Decisions are made on the p-value; the critical value
//! (the `1 - alpha` quantile of the permutation statistics) is reported for
//! reference and can disagree with the p-value only on ties.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{
    check_dims, gram_bytes, precompute_gram, Kernel, KernelSource, KernelSpec, OnTheFly,
    DEFAULT_GRAM_BUDGET_BYTES,
};
use crate::mmd::mmd_from_source;
use crate::rng::{shuffle, StreamKey};
use crate::stats::quantile;

/// Pooled sizes whose factorial is at most this are enumerated exhaustively.
pub const EXHAUSTIVE_LIMIT: u64 = 10_000;

/// Default cap on `R * (m + n)`.
pub const DEFAULT_MAX_PERMUTATION_WORK: u64 = 10_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramMode {
    /// Precompute when the matrix fits in the memory budget, else on the fly.
    Auto,
    /// Precompute; still falls back to on the fly when over budget.
    Precompute,
    OnTheFly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub permutations: usize,
    pub alpha: f64,
    pub seed: u64,
    pub gram_mode: GramMode,
    pub gram_budget_bytes: u64,
    pub max_permutation_work: u64,
    /// Enumerate every ordering of the pooled sample when `(m+n)!` is at most
    /// [`EXHAUSTIVE_LIMIT`].
    pub exhaustive_small_samples: bool,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            permutations: 500,
            alpha: 0.01,
            seed: 0,
            gram_mode: GramMode::Auto,
            gram_budget_bytes: DEFAULT_GRAM_BUDGET_BYTES,
            max_permutation_work: DEFAULT_MAX_PERMUTATION_WORK,
            exhaustive_small_samples: true,
        }
    }
}

impl TestConfig {
    pub fn new(permutations: usize, alpha: f64, seed: u64) -> Self {
        Self {
            permutations,
            alpha,
            seed,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Checks ranges and returns warnings for settings that are legal but
    /// suspicious (a level below the smallest attainable p-value).
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.permutations == 0 {
            return Err(Error::InvalidParameter(
                "permutation count must be at least 1".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        let mut warnings = Vec::new();
        let min_p = 1.0 / (self.permutations as f64 + 1.0);
        if min_p > self.alpha {
            warnings.push(format!(
                "smallest attainable p-value 1/(R+1) = {min_p} exceeds alpha = {}; the test can never reject",
                self.alpha
            ));
        }
        Ok(warnings)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramUsed {
    Precomputed,
    OnTheFly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub observed: f64,
    pub p_value: f64,
    pub critical_value: f64,
    pub reject: bool,
    /// Number of permutation statistics `R` actually evaluated.
    pub permutations: usize,
    pub exhaustive: bool,
    /// `#{stat_r >= observed}`.
    pub exceedances: usize,
    /// False when `observed > critical_value` disagrees with `p < alpha`
    /// (possible only with ties in the permutation distribution).
    pub critical_value_agrees: bool,
    pub permutation_stats: Vec<f64>,
    pub sigma_used: Option<f64>,
    pub gram: GramUsed,
    pub m: usize,
    pub n: usize,
    pub config: TestConfig,
}

/// Runs the test with the bandwidth resolved on the pooled sample.
pub fn permutation_test(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    spec: &KernelSpec,
    cfg: &TestConfig,
) -> Result<TestResult> {
    let pooled: Vec<Vec<f64>> = x.iter().chain(y).cloned().collect();
    check_pooled(&pooled, x.len(), y.len())?;
    let kernel = spec.resolve(&pooled)?;
    permutation_test_pooled(&pooled, x.len(), kernel, cfg)
}

fn check_pooled(pooled: &[Vec<f64>], m: usize, n: usize) -> Result<()> {
    if m < 2 || n < 2 {
        return Err(Error::SampleTooSmall(format!(
            "permutation test needs at least 2 items per sample, got m={m}, n={n}"
        )));
    }
    check_dims(pooled)?;
    Ok(())
}

fn factorial_capped(n: usize, cap: u64) -> Option<u64> {
    let mut acc: u64 = 1;
    for k in 2..=n as u64 {
        acc = acc.checked_mul(k)?;
        if acc > cap {
            return None;
        }
    }
    Some(acc)
}

/// Runs the test on a pooled sample whose first `m` items are X, with a
/// kernel already bound.
pub fn permutation_test_pooled(
    pooled: &[Vec<f64>],
    m: usize,
    kernel: Kernel,
    cfg: &TestConfig,
) -> Result<TestResult> {
    let total = pooled.len();
    let n = total.saturating_sub(m);
    check_pooled(pooled, m, n)?;
    for w in cfg.validate()? {
        log::warn!("{w}");
    }

    let exhaustive_count = if cfg.exhaustive_small_samples {
        factorial_capped(total, EXHAUSTIVE_LIMIT)
    } else {
        None
    };
    let r = exhaustive_count.map_or(cfg.permutations, |c| c as usize);
    let work = (r as u64).saturating_mul(total as u64);
    if work > cfg.max_permutation_work {
        return Err(Error::PermutationBudgetExceeded {
            work,
            limit: cfg.max_permutation_work,
        });
    }

    let want_gram = cfg.gram_mode != GramMode::OnTheFly;
    let gram = if want_gram && gram_bytes(total) <= cfg.gram_budget_bytes {
        Some(precompute_gram(kernel, pooled, (m, n), cfg.gram_budget_bytes)?)
    } else {
        if want_gram {
            log::info!(
                "kernel matrix of {} bytes exceeds budget {}; evaluating on the fly",
                gram_bytes(total),
                cfg.gram_budget_bytes
            );
        }
        None
    };

    let (observed, stats) = match &gram {
        Some(g) => run_statistics(g, m, r, exhaustive_count.is_some(), cfg.seed),
        None => {
            let src = OnTheFly {
                points: pooled,
                kernel,
            };
            run_statistics(&src, m, r, exhaustive_count.is_some(), cfg.seed)
        }
    };

    let exceedances = stats.iter().filter(|&&s| s >= observed).count();
    let p_value = (1 + exceedances) as f64 / (r + 1) as f64;
    let critical_value = quantile(&stats, 1.0 - cfg.alpha)?;
    let reject = p_value < cfg.alpha;
    Ok(TestResult {
        observed,
        p_value,
        critical_value,
        reject,
        permutations: r,
        exhaustive: exhaustive_count.is_some(),
        exceedances,
        critical_value_agrees: (observed > critical_value) == reject,
        permutation_stats: stats,
        sigma_used: kernel.sigma(),
        gram: if gram.is_some() {
            GramUsed::Precomputed
        } else {
            GramUsed::OnTheFly
        },
        m,
        n,
        config: *cfg,
    })
}

/// Statistic for one relabeling. Each side's indices are sorted first so
/// that every ordering producing the same split yields bit-identical sums.
fn split_statistic<S: KernelSource + ?Sized>(src: &S, order: &mut [usize], m: usize) -> f64 {
    let (xs, ys) = order.split_at_mut(m);
    xs.sort_unstable();
    ys.sort_unstable();
    mmd_from_source(src, xs, ys)
}

fn run_statistics<S: KernelSource + ?Sized>(
    src: &S,
    m: usize,
    r: usize,
    exhaustive: bool,
    seed: u64,
) -> (f64, Vec<f64>) {
    let total = src.len();
    let mut identity: Vec<usize> = (0..total).collect();
    let observed = split_statistic(src, &mut identity, m);

    let stats = if exhaustive {
        all_permutations(total)
            .into_par_iter()
            .map(|mut order| split_statistic(src, &mut order, m))
            .collect()
    } else {
        (0..r)
            .into_par_iter()
            .map(|k| {
                let mut rng = StreamKey::new(seed, "permutation").index(k as u64).rng();
                let mut order: Vec<usize> = (0..total).collect();
                shuffle(&mut rng, &mut order);
                split_statistic(src, &mut order, m)
            })
            .collect()
    };
    (observed, stats)
}

/// Every ordering of `0..n` in lexicographic order.
fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut current: Vec<usize> = (0..n).collect();
    let mut out = vec![current.clone()];
    loop {
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| current[i - 1] < current[i]) else {
            break;
        };
        let j = (i..n).rev().find(|&j| current[j] > current[i - 1]).unwrap();
        current.swap(i - 1, j);
        current[i..].reverse();
        out.push(current.clone());
    }
    out
}
