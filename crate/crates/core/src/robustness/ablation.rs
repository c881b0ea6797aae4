//! Paired ablations: one power curve per setting, every setting tested on
//! the same trial samples.
//!
//! Trial samples depend only on the seed, the group pair, the sample size
//! and the trial index (see [`crate::power::trial_samples`]), so running each
//! setting with the same [`TestConfig`] gives the pairing for free.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{median_heuristic_sigma, KernelSpec};
use crate::permutation::{permutation_test, TestConfig};
use crate::power::{rejection_rate_curve, rejection_rate_curve_indexed, PowerCurve};
use crate::rng::{partial_shuffle, StreamKey};
use crate::table::GroupedDataset;

use super::reduce::Pca;

/// Size of the fixed sample used to estimate a reference bandwidth.
pub const DEFAULT_REFERENCE_SAMPLE: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    Kernel,
    Bandwidth,
    Dimensionality,
    Representation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub mode: AblationMode,
    pub settings: Vec<String>,
    pub curves: Vec<PowerCurve>,
    /// Base σ that bandwidth multipliers were applied to, when fixed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_sigma: Option<f64>,
}

/// Where the bandwidth ablation's base σ comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum BandwidthReference {
    /// Median heuristic on each trial's pooled sample.
    PerTrial,
    /// Median heuristic once, on a seeded sample of up to `size` items drawn
    /// from the pooled two groups.
    FixedSample { size: usize },
}

impl Default for BandwidthReference {
    fn default() -> Self {
        Self::FixedSample {
            size: DEFAULT_REFERENCE_SAMPLE,
        }
    }
}

fn spec_name(spec: &KernelSpec) -> String {
    use crate::kernel::{BandwidthRule, KernelFamily};
    match (spec.family, spec.bandwidth) {
        (KernelFamily::Linear, _) => "linear".into(),
        (KernelFamily::Rbf, BandwidthRule::MedianHeuristic) => "rbf".into(),
        (KernelFamily::Rbf, BandwidthRule::Fixed { sigma }) => format!("rbf:fixed:{sigma}"),
        (KernelFamily::Rbf, BandwidthRule::ScaledMedian { multiplier }) => {
            format!("rbf:scaled:{multiplier}")
        }
    }
}

/// One curve per kernel spec.
pub fn kernel_ablation(
    ds: &GroupedDataset,
    a: &str,
    b: &str,
    sizes: &[usize],
    trials: usize,
    kernels: &[KernelSpec],
    cfg: &TestConfig,
) -> Result<AblationReport> {
    if kernels.is_empty() {
        return Err(Error::InvalidParameter("no kernels to compare".into()));
    }
    let curves = kernels
        .iter()
        .map(|k| rejection_rate_curve(ds, a, b, sizes, trials, k, cfg))
        .collect::<Result<_>>()?;
    Ok(AblationReport {
        mode: AblationMode::Kernel,
        settings: kernels.iter().map(spec_name).collect(),
        curves,
        reference_sigma: None,
    })
}

/// Median heuristic on a seeded subsample of the pooled groups `a` and `b`.
pub fn reference_sigma(
    ds: &GroupedDataset,
    a: &str,
    b: &str,
    size: usize,
    seed: u64,
) -> Result<f64> {
    let mut pool: Vec<usize> = ds.group(a)?.to_vec();
    if a != b {
        pool.extend_from_slice(ds.group(b)?);
    }
    let k = size.min(pool.len());
    if k < 2 {
        return Err(Error::SampleTooSmall(format!(
            "reference bandwidth needs at least 2 items, got {k}"
        )));
    }
    let mut rng = StreamKey::new(seed, "reference-sigma").label(a).label(b).rng();
    partial_shuffle(&mut rng, &mut pool, k);
    median_heuristic_sigma(&ds.vectors(&pool[..k]))
}

/// RBF curves with the bandwidth scaled by each multiplier.
pub fn bandwidth_ablation(
    ds: &GroupedDataset,
    a: &str,
    b: &str,
    sizes: &[usize],
    trials: usize,
    multipliers: &[f64],
    reference: BandwidthReference,
    cfg: &TestConfig,
) -> Result<AblationReport> {
    if multipliers.is_empty() {
        return Err(Error::InvalidParameter("no bandwidth multipliers".into()));
    }
    for &mult in multipliers {
        if !(mult.is_finite() && mult > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth multiplier must be finite and positive, got {mult}"
            )));
        }
    }
    let base = match reference {
        BandwidthReference::PerTrial => None,
        BandwidthReference::FixedSample { size } => {
            Some(reference_sigma(ds, a, b, size, cfg.seed)?)
        }
    };
    let curves = multipliers
        .iter()
        .map(|&mult| {
            let spec = match base {
                Some(sigma) => KernelSpec::rbf_fixed(sigma * mult),
                None => KernelSpec::rbf_scaled(mult),
            };
            rejection_rate_curve(ds, a, b, sizes, trials, &spec, cfg)
        })
        .collect::<Result<_>>()?;
    Ok(AblationReport {
        mode: AblationMode::Bandwidth,
        settings: multipliers.iter().map(|m| format!("{m}x")).collect(),
        curves,
        reference_sigma: base,
    })
}

/// Curves after PCA to each target dimension.
///
/// The projection for each dimension is fit once on all items of `a` and
/// `b`, then every trial tests the projected vectors of its sampled items
/// with a bandwidth resolved in the reduced space.
pub fn dimensionality_ablation(
    ds: &GroupedDataset,
    a: &str,
    b: &str,
    sizes: &[usize],
    trials: usize,
    dims: &[usize],
    spec: &KernelSpec,
    cfg: &TestConfig,
) -> Result<AblationReport> {
    if dims.is_empty() {
        return Err(Error::InvalidParameter("no target dimensions".into()));
    }
    let mut members: Vec<usize> = ds.group(a)?.to_vec();
    if a != b {
        members.extend_from_slice(ds.group(b)?);
    }
    let fit_data = ds.vectors(&members);
    let mut curves = Vec::with_capacity(dims.len());
    for &d in dims {
        let pca = Pca::fit(&fit_data, d)?;
        let projected = pca.transform(&fit_data)?;
        let mut by_index: Vec<Option<Vec<f64>>> = vec![None; ds.table().len()];
        for (&i, v) in members.iter().zip(projected) {
            by_index[i] = Some(v);
        }
        let lookup = |idx: &[usize]| -> Vec<Vec<f64>> {
            idx.iter()
                .map(|&i| by_index[i].clone().expect("sampled item was projected"))
                .collect()
        };
        curves.push(rejection_rate_curve_indexed(
            ds,
            a,
            b,
            sizes,
            trials,
            cfg,
            |ix, iy, test_cfg| permutation_test(&lookup(ix), &lookup(iy), spec, test_cfg),
        )?);
    }
    Ok(AblationReport {
        mode: AblationMode::Dimensionality,
        settings: dims.iter().map(|d| format!("pca:{d}")).collect(),
        curves,
        reference_sigma: None,
    })
}

/// Curves for the same items embedded by different models.
///
/// Every table must list the same ids in the same order, so trial samples
/// pick the same items in every representation.
pub fn representation_ablation(
    representations: &[(String, &GroupedDataset)],
    a: &str,
    b: &str,
    sizes: &[usize],
    trials: usize,
    spec: &KernelSpec,
    cfg: &TestConfig,
) -> Result<AblationReport> {
    let Some((_, first)) = representations.first() else {
        return Err(Error::InvalidParameter("no representations to compare".into()));
    };
    for (name, ds) in &representations[1..] {
        let same = ds.table().len() == first.table().len()
            && ds
                .table()
                .records()
                .iter()
                .zip(first.table().records())
                .all(|(r, s)| r.id == s.id && r.group_label == s.group_label);
        if !same {
            return Err(Error::ShapeMismatch(format!(
                "representation {name} does not list the same ids and labels in the same order"
            )));
        }
    }
    let curves = representations
        .iter()
        .map(|(_, ds)| rejection_rate_curve(ds, a, b, sizes, trials, spec, cfg))
        .collect::<Result<_>>()?;
    Ok(AblationReport {
        mode: AblationMode::Representation,
        settings: representations.iter().map(|(n, _)| n.clone()).collect(),
        curves,
        reference_sigma: None,
    })
}
