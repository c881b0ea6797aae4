//! Nearest-neighbor memorization audit.
//!
//! A reference corpus fixes, per stratum, how close an item typically gets to
//! its nearest *other* reference item. Candidates whose nearest reference
//! neighbor is at least that close are flagged for review.

use std::collections::BTreeMap;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::dot;
use crate::stats::quantile;
use crate::table::GroupedDataset;

/// Fewest reference items a stratum needs to be calibrated.
pub const MIN_STRATUM_SIZE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMetric {
    #[default]
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    /// Percentile of the within-reference nearest-neighbor distribution used
    /// as the flag threshold, strictly inside (0, 100).
    pub threshold_percentile: f64,
    #[serde(default)]
    pub metric: SimilarityMetric,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            threshold_percentile: 99.0,
            metric: SimilarityMetric::Cosine,
        }
    }
}

impl AuditConfig {
    pub fn validate(&self) -> Result<()> {
        let p = self.threshold_percentile;
        if !(p > 0.0 && p < 100.0) {
            return Err(Error::InvalidParameter(format!(
                "threshold percentile must lie strictly between 0 and 100, got {p}"
            )));
        }
        Ok(())
    }

    pub fn expected_fp_rate(&self) -> f64 {
        1.0 - self.threshold_percentile / 100.0
    }
}

fn norm(v: &[f64]) -> Result<f64> {
    let n = dot(v, v).sqrt();
    if n == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(n)
}

/// Cosine similarity. Errors on a zero vector.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(a.len(), b.len()));
    }
    Ok(dot(a, b) / (norm(a)? * norm(b)?))
}

/// Vectors with their norms computed once.
struct Corpus<'a> {
    vectors: &'a [Vec<f64>],
    norms: Vec<f64>,
}

impl<'a> Corpus<'a> {
    fn new(vectors: &'a [Vec<f64>]) -> Result<Self> {
        let norms = vectors.iter().map(|v| norm(v)).collect::<Result<_>>()?;
        Ok(Self { vectors, norms })
    }

    /// Best match for `query`, skipping position `skip`. Strictly greater
    /// similarity wins, so ties go to the lowest index.
    fn nearest(&self, query: &[f64], query_norm: f64, skip: Option<usize>) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, (v, n)) in self.vectors.iter().zip(&self.norms).enumerate() {
            if Some(i) == skip {
                continue;
            }
            let s = dot(query, v) / (query_norm * n);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        best
    }
}

/// Index and cosine similarity of the corpus item most similar to `query`.
pub fn nn_similarity(query: &[f64], corpus: &[Vec<f64>]) -> Result<(usize, f64)> {
    if corpus.is_empty() {
        return Err(Error::Empty("nearest-neighbor corpus is empty"));
    }
    let d = query.len();
    if let Some(v) = corpus.iter().find(|v| v.len() != d) {
        return Err(Error::DimensionMismatch(d, v.len()));
    }
    let c = Corpus::new(corpus)?;
    Ok(c.nearest(query, norm(query)?, None).expect("non-empty corpus"))
}

/// Per-stratum thresholds from the reference corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub thresholds: BTreeMap<String, f64>,
    /// Leave-one-out nearest-neighbor similarities, in stratum order.
    pub nn_similarities: BTreeMap<String, Vec<f64>>,
    /// Strata with fewer than [`MIN_STRATUM_SIZE`] items.
    pub skipped: Vec<String>,
}

/// For each reference item, the similarity to its nearest other item in the
/// same stratum; the threshold is the configured percentile of those values.
pub fn calibrate_threshold(reference: &GroupedDataset, cfg: &AuditConfig) -> Result<Calibration> {
    cfg.validate()?;
    let mut thresholds = BTreeMap::new();
    let mut nn_similarities = BTreeMap::new();
    let mut skipped = Vec::new();
    for (label, members) in reference.groups() {
        if members.len() < MIN_STRATUM_SIZE {
            warn!(
                "stratum {label} has {} reference items (need {MIN_STRATUM_SIZE}); skipped",
                members.len()
            );
            skipped.push(label.clone());
            continue;
        }
        let vectors = reference.vectors(members);
        let corpus = Corpus::new(&vectors)?;
        let sims: Vec<f64> = (0..vectors.len())
            .into_par_iter()
            .map(|i| {
                corpus
                    .nearest(&vectors[i], corpus.norms[i], Some(i))
                    .expect("stratum has other items")
                    .1
            })
            .collect();
        thresholds.insert(label.clone(), quantile(&sims, cfg.threshold_percentile / 100.0)?);
        nn_similarities.insert(label.clone(), sims);
    }
    if thresholds.is_empty() {
        let (group, size) = reference
            .groups()
            .iter()
            .map(|(l, m)| (l.clone(), m.len()))
            .max_by_key(|(_, n)| *n)
            .unwrap_or_default();
        return Err(Error::GroupTooSmall {
            group,
            size,
            needed: MIN_STRATUM_SIZE,
        });
    }
    Ok(Calibration {
        thresholds,
        nn_similarities,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMatch {
    pub id: String,
    pub stratum: String,
    pub best_match_id: String,
    pub similarity: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumSummary {
    pub candidates: usize,
    pub flagged: usize,
    pub exceedance_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub threshold_percentile: f64,
    pub baseline_threshold: BTreeMap<String, f64>,
    pub candidate_nn: Vec<CandidateMatch>,
    pub flagged: Vec<String>,
    pub per_stratum: BTreeMap<String, StratumSummary>,
    /// Flagged over audited candidates, pooled across strata.
    pub exceedance_rate: f64,
    pub expected_fp_rate: f64,
    /// Reference strata too small to calibrate; their candidates are not audited.
    pub skipped_strata: Vec<String>,
    pub unaudited_candidates: usize,
}

/// Matches every candidate against the reference items of its own stratum.
/// Candidates are never excluded from matching reference items, even
/// verbatim copies.
pub fn audit(
    candidates: &GroupedDataset,
    reference: &GroupedDataset,
    cfg: &AuditConfig,
) -> Result<AuditReport> {
    if candidates.table().dim() != reference.table().dim() {
        return Err(Error::DimensionMismatch(
            reference.table().dim(),
            candidates.table().dim(),
        ));
    }
    for label in candidates.groups().keys() {
        reference.group(label)?;
    }
    let calibration = calibrate_threshold(reference, cfg)?;

    let mut candidate_nn = Vec::new();
    let mut per_stratum = BTreeMap::new();
    let mut unaudited = 0;
    for (label, members) in candidates.groups() {
        let Some(&threshold) = calibration.thresholds.get(label) else {
            unaudited += members.len();
            continue;
        };
        let ref_idx = reference.group(label)?;
        let ref_vectors = reference.vectors(ref_idx);
        let corpus = Corpus::new(&ref_vectors)?;
        let queries = candidates.vectors(members);
        let matches: Vec<CandidateMatch> = members
            .par_iter()
            .zip(queries.par_iter())
            .map(|(&ci, q)| {
                let (best, similarity) = corpus.nearest(q, norm(q)?, None).expect("non-empty");
                Ok(CandidateMatch {
                    id: candidates.table().records()[ci].id.clone(),
                    stratum: label.clone(),
                    best_match_id: reference.table().records()[ref_idx[best]].id.clone(),
                    similarity,
                    flagged: similarity >= threshold,
                })
            })
            .collect::<Result<_>>()?;
        let flagged = matches.iter().filter(|m| m.flagged).count();
        per_stratum.insert(
            label.clone(),
            StratumSummary {
                candidates: matches.len(),
                flagged,
                exceedance_rate: flagged as f64 / matches.len() as f64,
            },
        );
        candidate_nn.extend(matches);
    }

    let flagged: Vec<String> = candidate_nn
        .iter()
        .filter(|m| m.flagged)
        .map(|m| m.id.clone())
        .collect();
    let exceedance_rate = if candidate_nn.is_empty() {
        0.0
    } else {
        flagged.len() as f64 / candidate_nn.len() as f64
    };
    Ok(AuditReport {
        threshold_percentile: cfg.threshold_percentile,
        baseline_threshold: calibration.thresholds,
        candidate_nn,
        flagged,
        per_stratum,
        exceedance_rate,
        expected_fp_rate: cfg.expected_fp_rate(),
        skipped_strata: calibration.skipped,
        unaudited_candidates: unaudited,
    })
}
