//! Monte-Carlo power curves, pairwise MMD matrices with split-half negative
//! controls, and bootstrap confidence intervals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{check_dims, gram_bytes, precompute_gram, Kernel, KernelSpec, OnTheFly};
use crate::mmd::mmd_from_source;
use crate::permutation::{permutation_test, TestConfig, TestResult};
use crate::rng::StreamKey;
use crate::stats::quantile_sorted;
use crate::table::{subsample, GroupedDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub pair: (String, String),
    pub sample_sizes: Vec<usize>,
    pub rejections: Vec<usize>,
    pub rates: Vec<f64>,
    pub trials: usize,
    pub alpha: f64,
    pub seed: u64,
}

/// The two samples for one Monte-Carlo trial, as table indices.
///
/// Depends only on `(seed, a, b, n, trial)`, so every ablation setting that
/// shares those sees the same items.
pub fn trial_samples(
    ds: &GroupedDataset,
    a: &str,
    b: &str,
    n: usize,
    trial: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let key = StreamKey::new(seed, "power")
        .label(a)
        .label(b)
        .index(n as u64)
        .index(trial as u64);
    if a == b {
        let size = ds.group(a)?.len();
        if 2 * n > size {
            return Err(Error::GroupTooSmall {
                group: a.to_string(),
                size,
                needed: 2 * n,
            });
        }
        let mut both = subsample(ds, a, 2 * n, key.clone().label("same").seed())?;
        let second = both.split_off(n);
        Ok((both, second))
    } else {
        let x = subsample(ds, a, n, key.clone().label("a").seed())?;
        let y = subsample(ds, b, n, key.label("b").seed())?;
        Ok((x, y))
    }
}

/// Seed for the permutation test of one trial.
pub fn trial_test_seed(seed: u64, a: &str, b: &str, n: usize, trial: usize) -> u64 {
    StreamKey::new(seed, "power-test")
        .label(a)
        .label(b)
        .index(n as u64)
        .index(trial as u64)
        .seed()
}

/// Empirical power of the test of group `a` against `b` at each sample size.
///
/// Each trial draws fresh samples (disjoint halves when `a == b`), resolves
/// the bandwidth on that trial's pooled sample and runs a full permutation
/// test with `cfg.permutations`, `cfg.alpha`.
pub fn rejection_rate_curve(
    ds: &GroupedDataset,
    a: &str,
    b: &str,
    sizes: &[usize],
    trials: usize,
    spec: &KernelSpec,
    cfg: &TestConfig,
) -> Result<PowerCurve> {
    rejection_rate_curve_with(ds, a, b, sizes, trials, cfg, |x, y, test_cfg| {
        permutation_test(x, y, spec, test_cfg)
    })
}

/// Generic driver: `run` receives each trial's two samples and the trial's
/// test configuration.
pub fn rejection_rate_curve_with<F>(
    ds: &GroupedDataset,
    a: &str,
    b: &str,
    sizes: &[usize],
    trials: usize,
    cfg: &TestConfig,
    run: F,
) -> Result<PowerCurve>
where
    F: Fn(&[Vec<f64>], &[Vec<f64>], &TestConfig) -> Result<TestResult> + Sync,
{
    rejection_rate_curve_indexed(ds, a, b, sizes, trials, cfg, |ix, iy, test_cfg| {
        run(&ds.vectors(ix), &ds.vectors(iy), test_cfg)
    })
}

/// Like [`rejection_rate_curve_with`], but `run` receives table indices.
pub fn rejection_rate_curve_indexed<F>(
    ds: &GroupedDataset,
    a: &str,
    b: &str,
    sizes: &[usize],
    trials: usize,
    cfg: &TestConfig,
    run: F,
) -> Result<PowerCurve>
where
    F: Fn(&[usize], &[usize], &TestConfig) -> Result<TestResult> + Sync,
{
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    cfg.validate()?;
    ds.group(a)?;
    ds.group(b)?;
    for &n in sizes {
        if n < 2 {
            return Err(Error::SampleTooSmall(format!(
                "sample size {n} is below 2"
            )));
        }
    }

    let mut rejections = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let outcomes: Vec<bool> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let (ix, iy) = trial_samples(ds, a, b, n, t, cfg.seed)?;
                let test_cfg = cfg.with_seed(trial_test_seed(cfg.seed, a, b, n, t));
                Ok(run(&ix, &iy, &test_cfg)?.reject)
            })
            .collect::<Result<_>>()?;
        rejections.push(outcomes.iter().filter(|&&r| r).count());
    }
    Ok(PowerCurve {
        pair: (a.to_string(), b.to_string()),
        sample_sizes: sizes.to_vec(),
        rates: rejections
            .iter()
            .map(|&r| r as f64 / trials as f64)
            .collect(),
        rejections,
        trials,
        alpha: cfg.alpha,
        seed: cfg.seed,
    })
}

/// Smallest sample size whose rejection rate reaches `target`.
pub fn threshold_sample_size(curve: &PowerCurve, target: f64) -> Option<usize> {
    curve
        .sample_sizes
        .iter()
        .zip(&curve.rates)
        .find(|(_, &r)| r >= target)
        .map(|(&n, _)| n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub mmd2: f64,
    pub p_value: f64,
    pub significant: bool,
    pub m: usize,
    pub n: usize,
    pub sigma_used: Option<f64>,
}

/// Pairwise MMD²_u over all groups. Diagonal cells test disjoint random
/// halves of one group (negative controls); off-diagonal cells test capped
/// samples of two groups. Only the upper triangle is computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmdMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub p_values: Vec<Vec<f64>>,
    pub significant: Vec<Vec<bool>>,
    pub cells: Vec<Vec<MatrixCell>>,
    pub alpha: f64,
    pub cap: usize,
    pub diagonal_mode: String,
}

pub fn mmd_matrix(
    ds: &GroupedDataset,
    cap: usize,
    spec: &KernelSpec,
    cfg: &TestConfig,
) -> Result<MmdMatrix> {
    if cap < 2 {
        return Err(Error::InvalidParameter(format!("cap must be at least 2, got {cap}")));
    }
    cfg.validate()?;
    let labels: Vec<String> = ds.groups().keys().cloned().collect();
    for label in &labels {
        let size = ds.group(label)?.len();
        if size < 4 {
            return Err(Error::GroupTooSmall {
                group: label.clone(),
                size,
                needed: 4,
            });
        }
    }

    let k = labels.len();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i..k).map(move |j| (i, j))).collect();
    let cells: Vec<MatrixCell> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let key = StreamKey::new(cfg.seed, "matrix").label(&labels[i]).label(&labels[j]);
            let (ix, iy) = if i == j {
                let size = ds.group(&labels[i])?.len();
                let mut both =
                    subsample(ds, &labels[i], size.min(2 * cap), key.clone().label("split").seed())?;
                let second = both.split_off(both.len().div_ceil(2));
                (both, second)
            } else {
                let si = ds.group(&labels[i])?.len().min(cap);
                let sj = ds.group(&labels[j])?.len().min(cap);
                (
                    subsample(ds, &labels[i], si, key.clone().label("a").seed())?,
                    subsample(ds, &labels[j], sj, key.clone().label("b").seed())?,
                )
            };
            let x = ds.vectors(&ix);
            let y = ds.vectors(&iy);
            let res = permutation_test(&x, &y, spec, &cfg.with_seed(key.label("test").seed()))?;
            Ok(MatrixCell {
                mmd2: res.observed,
                p_value: res.p_value,
                significant: res.reject,
                m: res.m,
                n: res.n,
                sigma_used: res.sigma_used,
            })
        })
        .collect::<Result<_>>()?;

    let blank = MatrixCell {
        mmd2: 0.0,
        p_value: 1.0,
        significant: false,
        m: 0,
        n: 0,
        sigma_used: None,
    };
    let mut grid = vec![vec![blank; k]; k];
    for (&(i, j), cell) in pairs.iter().zip(cells) {
        grid[j][i] = cell.clone();
        grid[i][j] = cell;
    }
    Ok(MmdMatrix {
        values: grid.iter().map(|r| r.iter().map(|c| c.mmd2).collect()).collect(),
        p_values: grid.iter().map(|r| r.iter().map(|c| c.p_value).collect()).collect(),
        significant: grid
            .iter()
            .map(|r| r.iter().map(|c| c.significant).collect())
            .collect(),
        cells: grid,
        labels,
        alpha: cfg.alpha,
        cap,
        diagonal_mode: "split_half".to_string(),
    })
}

/// Percentile bootstrap interval for MMD²_u.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub iterations: usize,
    pub replicate_median: f64,
    pub method: String,
    pub sigma_used: Option<f64>,
}

pub const MIN_BOOTSTRAP_ITERATIONS: usize = 100;

/// Point estimate and bootstrap replicates of MMD²_u.
///
/// X and Y are resampled independently with replacement at their original
/// sizes. The kernel bandwidth is bound once on the original pooled sample
/// and reused for every replicate.
pub fn bootstrap_replicates(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    spec: &KernelSpec,
    iterations: usize,
    seed: u64,
) -> Result<(Kernel, f64, Vec<f64>)> {
    let (m, n) = (x.len(), y.len());
    if m < 2 || n < 2 {
        return Err(Error::SampleTooSmall(format!(
            "bootstrap needs at least 2 items per sample, got m={m}, n={n}"
        )));
    }
    if iterations < MIN_BOOTSTRAP_ITERATIONS {
        return Err(Error::InvalidParameter(format!(
            "bootstrap needs at least {MIN_BOOTSTRAP_ITERATIONS} iterations, got {iterations}"
        )));
    }
    let pooled: Vec<Vec<f64>> = x.iter().chain(y).cloned().collect();
    check_dims(&pooled)?;
    let kernel = spec.resolve(&pooled)?;
    let total = m + n;

    let replicate = |src: &dyn crate::kernel::KernelSource, r: usize| -> f64 {
        use rand::Rng;
        let mut rng = StreamKey::new(seed, "bootstrap").index(r as u64).rng();
        let ix: Vec<usize> = (0..m).map(|_| rng.random_range(0..m as u64) as usize).collect();
        let iy: Vec<usize> = (0..n)
            .map(|_| m + rng.random_range(0..n as u64) as usize)
            .collect();
        mmd_from_source(src, &ix, &iy)
    };
    let ix: Vec<usize> = (0..m).collect();
    let iy: Vec<usize> = (m..total).collect();

    let (point, reps) = if gram_bytes(total) <= crate::kernel::DEFAULT_GRAM_BUDGET_BYTES {
        let g = precompute_gram(kernel, &pooled, (m, n), crate::kernel::DEFAULT_GRAM_BUDGET_BYTES)?;
        let point = mmd_from_source(&g, &ix, &iy);
        let reps = (0..iterations)
            .into_par_iter()
            .map(|r| replicate(&g, r))
            .collect();
        (point, reps)
    } else {
        let src = OnTheFly {
            points: &pooled,
            kernel,
        };
        let point = mmd_from_source(&src, &ix, &iy);
        let reps = (0..iterations)
            .into_par_iter()
            .map(|r| replicate(&src, r))
            .collect();
        (point, reps)
    };
    Ok((kernel, point, reps))
}

/// Equal-tailed percentile interval of `replicates` at `level`.
pub fn percentile_interval(replicates: &[f64], level: f64) -> Result<(f64, f64)> {
    if replicates.is_empty() {
        return Err(Error::Empty("no bootstrap replicates"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let mut sorted = replicates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((quantile_sorted(&sorted, tail), quantile_sorted(&sorted, 1.0 - tail)))
}

pub fn bootstrap_ci(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    spec: &KernelSpec,
    iterations: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapCi> {
    let (kernel, point, reps) = bootstrap_replicates(x, y, spec, iterations, seed)?;
    let (lower, upper) = percentile_interval(&reps, level)?;
    let mut sorted = reps;
    sorted.sort_by(f64::total_cmp);
    let median = quantile_sorted(&sorted, 0.5);
    Ok(BootstrapCi {
        point,
        lower,
        upper,
        level,
        iterations,
        replicate_median: median,
        method: "percentile".to_string(),
        sigma_used: kernel.sigma(),
    })
}
