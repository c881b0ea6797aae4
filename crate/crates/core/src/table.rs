//! Labeled embedding tables and group-level sampling.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::rng::{partial_shuffle, shuffle, StreamKey};

/// One embedded item.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub group_label: String,
    pub vector: Vec<f32>,
}

/// A validated, immutable set of embedding records sharing one dimensionality.
///
/// Vectors are stored as `f32`; every statistic downstream widens to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    records: Vec<EmbeddingRecord>,
    dim: usize,
    source_tag: String,
}

impl EmbeddingTable {
    /// Validates and wraps `records`. Row numbers in errors are zero-based
    /// record positions.
    pub fn new(records: Vec<EmbeddingRecord>, source_tag: impl Into<String>) -> Result<Self> {
        let first = records.first().ok_or(Error::Empty("table has no records"))?;
        let dim = first.vector.len();
        if dim == 0 {
            return Err(Error::MalformedHeader("vector dimension is zero".into()));
        }
        let mut seen: HashMap<&str, ()> = HashMap::with_capacity(records.len());
        for (row, rec) in records.iter().enumerate() {
            if rec.vector.len() != dim {
                return Err(Error::RaggedRow {
                    row,
                    expected: dim,
                    found: rec.vector.len(),
                });
            }
            if let Some(column) = rec.vector.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row, column });
            }
            if rec.group_label.is_empty() {
                return Err(Error::EmptyLabel { row });
            }
            if seen.insert(rec.id.as_str(), ()).is_some() {
                return Err(Error::DuplicateId {
                    row,
                    id: rec.id.clone(),
                });
            }
        }
        Ok(Self {
            records,
            dim,
            source_tag: source_tag.into(),
        })
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    /// Widened copies of the vectors at `indices`, in order.
    pub fn vectors(&self, indices: &[usize]) -> Vec<Vec<f64>> {
        indices
            .iter()
            .map(|&i| self.records[i].vector.iter().map(|&v| v as f64).collect())
            .collect()
    }

    pub fn all_vectors(&self) -> Vec<Vec<f64>> {
        self.records
            .iter()
            .map(|r| r.vector.iter().map(|&v| v as f64).collect())
            .collect()
    }

    /// Builds a table from `f64` vectors (narrowed to `f32`).
    pub fn from_vectors(
        ids: Vec<String>,
        labels: Vec<String>,
        vectors: &[Vec<f64>],
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        if ids.len() != vectors.len() || labels.len() != vectors.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} ids, {} labels, {} vectors",
                ids.len(),
                labels.len(),
                vectors.len()
            )));
        }
        let records = ids
            .into_iter()
            .zip(labels)
            .zip(vectors)
            .map(|((id, group_label), v)| EmbeddingRecord {
                id,
                group_label,
                vector: v.iter().map(|&x| x as f32).collect(),
            })
            .collect();
        Self::new(records, source_tag)
    }
}

/// A table partitioned by group label.
#[derive(Debug, Clone)]
pub struct GroupedDataset {
    table: EmbeddingTable,
    groups: BTreeMap<String, Vec<usize>>,
}

impl GroupedDataset {
    pub fn new(table: EmbeddingTable) -> Self {
        let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, rec) in table.records().iter().enumerate() {
            groups.entry(rec.group_label.clone()).or_default().push(i);
        }
        Self { table, groups }
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    pub fn groups(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.groups
    }

    pub fn labels(&self) -> Vec<&str> {
        self.groups.keys().map(String::as_str).collect()
    }

    pub fn group(&self, label: &str) -> Result<&[usize]> {
        self.groups
            .get(label)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownGroup(label.to_string()))
    }

    pub fn vectors(&self, indices: &[usize]) -> Vec<Vec<f64>> {
        self.table.vectors(indices)
    }
}

/// `k` distinct indices drawn uniformly without replacement from `group`.
pub fn subsample(ds: &GroupedDataset, group: &str, k: usize, seed: u64) -> Result<Vec<usize>> {
    let members = ds.group(group)?;
    if k > members.len() {
        return Err(Error::GroupTooSmall {
            group: group.to_string(),
            size: members.len(),
            needed: k,
        });
    }
    let mut rng = StreamKey::new(seed, "subsample").label(group).rng();
    let mut pool = members.to_vec();
    partial_shuffle(&mut rng, &mut pool, k);
    pool.truncate(k);
    Ok(pool)
}

/// Splits `group` into two disjoint halves covering it. With an odd size
/// the first half gets the extra element.
pub fn split_half(ds: &GroupedDataset, group: &str, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let members = ds.group(group)?;
    if members.len() < 4 {
        return Err(Error::GroupTooSmall {
            group: group.to_string(),
            size: members.len(),
            needed: 4,
        });
    }
    let mut rng = StreamKey::new(seed, "split_half").label(group).rng();
    let mut pool = members.to_vec();
    shuffle(&mut rng, &mut pool);
    let second = pool.split_off(pool.len().div_ceil(2));
    Ok((pool, second))
}
