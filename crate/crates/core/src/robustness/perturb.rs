//! Vector-level input perturbations and the paired clean-versus-perturbed test.
//!
//! Perturbation strength is an amplitude ratio: at ratio 1 the perturbation's
//! standard deviation (noise) or amplitude (watermark) equals the signal's
//! standard deviation. The watermark here is a periodic coordinate mask, the
//! vector-space analogue of an image grid watermark.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{check_dims, KernelSpec};
use crate::permutation::{permutation_test, TestConfig, TestResult};
use crate::rng::StreamKey;

use super::reduce::{Pca, ReducerMethod, ReducerSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationKind {
    GaussianNoise,
    /// Adds a constant offset to every coordinate whose index is a multiple
    /// of `period`.
    GridWatermark { period: usize },
}

/// What "signal standard deviation" is measured over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalScale {
    /// One value: all coordinates of all records about their grand mean.
    #[default]
    Global,
    /// One value per coordinate, about that coordinate's mean.
    PerCoordinate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    #[serde(flatten)]
    pub kind: PerturbationKind,
    /// SNR for noise, SWR for the watermark. Larger is weaker.
    pub ratio: f64,
    pub seed: u64,
    #[serde(default)]
    pub signal_scale: SignalScale,
}

impl PerturbationSpec {
    pub fn noise(ratio: f64, seed: u64) -> Self {
        Self {
            kind: PerturbationKind::GaussianNoise,
            ratio,
            seed,
            signal_scale: SignalScale::Global,
        }
    }

    pub fn watermark(ratio: f64, period: usize) -> Self {
        Self {
            kind: PerturbationKind::GridWatermark { period },
            ratio,
            seed: 0,
            signal_scale: SignalScale::Global,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio.is_finite() && self.ratio > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "perturbation ratio must be finite and positive, got {}",
                self.ratio
            )));
        }
        if let PerturbationKind::GridWatermark { period } = self.kind {
            if period < 2 {
                return Err(Error::InvalidParameter(format!(
                    "watermark period must be at least 2, got {period}"
                )));
            }
        }
        Ok(())
    }
}

/// Population standard deviation of the signal, one entry per coordinate
/// (repeated for [`SignalScale::Global`]).
pub fn signal_std(vectors: &[Vec<f64>], scale: SignalScale) -> Result<Vec<f64>> {
    if vectors.is_empty() {
        return Err(Error::Empty("cannot perturb an empty sample"));
    }
    let d = check_dims(vectors)?;
    let n = vectors.len() as f64;
    Ok(match scale {
        SignalScale::Global => {
            let count = n * d as f64;
            let mu = vectors.iter().flatten().sum::<f64>() / count;
            let var = vectors.iter().flatten().map(|v| (v - mu) * (v - mu)).sum::<f64>() / count;
            vec![var.sqrt(); d]
        }
        SignalScale::PerCoordinate => (0..d)
            .map(|j| {
                let mu = vectors.iter().map(|v| v[j]).sum::<f64>() / n;
                let var = vectors.iter().map(|v| (v[j] - mu) * (v[j] - mu)).sum::<f64>() / n;
                var.sqrt()
            })
            .collect(),
    })
}

fn content_key(seed: u64, v: &[f64]) -> StreamKey {
    v.iter()
        .fold(StreamKey::new(seed, "perturb"), |k, x| k.index(x.to_bits()))
}

/// Applies `spec` to every record.
///
/// Noise for a record is drawn from a stream keyed by the record's own
/// contents, so the output for a record does not depend on where it sits in
/// the list. Identical input vectors therefore receive identical noise.
pub fn perturb(vectors: &[Vec<f64>], spec: &PerturbationSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let sigma = signal_std(vectors, spec.signal_scale)?;
    let scale: Vec<f64> = sigma.iter().map(|s| s / spec.ratio).collect();
    Ok(match spec.kind {
        PerturbationKind::GaussianNoise => vectors
            .iter()
            .map(|v| {
                let mut rng = content_key(spec.seed, v).rng();
                v.iter()
                    .zip(&scale)
                    .map(|(&x, &s)| {
                        let z: f64 = Normal::new(0.0, 1.0).unwrap().sample(&mut rng);
                        x + s * z
                    })
                    .collect()
            })
            .collect(),
        PerturbationKind::GridWatermark { period } => vectors
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&scale)
                    .enumerate()
                    .map(|(j, (&x, &s))| if j % period == 0 { x + s } else { x })
                    .collect()
            })
            .collect(),
    })
}

/// Outcome of a paired clean-versus-perturbed test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedPerturbationResult {
    pub spec: PerturbationSpec,
    pub reducer: Option<ReducerSpec>,
    pub test: TestResult,
}

/// Tests `clean` against `perturb(clean)`. With a reducer, the projection is
/// fit on the pooled clean and perturbed vectors before they are split back.
pub fn paired_perturbation_test(
    clean: &[Vec<f64>],
    spec: &PerturbationSpec,
    kernel: &KernelSpec,
    cfg: &TestConfig,
    reducer: Option<&ReducerSpec>,
) -> Result<PairedPerturbationResult> {
    if clean.len() < 4 {
        return Err(Error::SampleTooSmall(format!(
            "paired perturbation test needs at least 4 items, got {}",
            clean.len()
        )));
    }
    let perturbed = perturb(clean, spec)?;
    let test = match reducer {
        Some(r) if r.method == ReducerMethod::Pca => {
            let pooled: Vec<Vec<f64>> = clean.iter().chain(&perturbed).cloned().collect();
            let reduced = Pca::fit(&pooled, r.target_dim)?.transform(&pooled)?;
            let (a, b) = reduced.split_at(clean.len());
            permutation_test(a, b, kernel, cfg)?
        }
        _ => permutation_test(clean, &perturbed, kernel, cfg)?,
    };
    Ok(PairedPerturbationResult {
        spec: *spec,
        reducer: reducer.copied(),
        test,
    })
}
