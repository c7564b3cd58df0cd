//! TF-IDF featurization over unigram tokens.
//!
//! idf(t) = ln((1 + N) / (1 + df(t))) + 1, term frequency is the raw count
//! (or 1 + ln(count) when sublinear), and every vector is L2-normalized.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textproc::tokens;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TfidfConfig {
    pub min_df: usize,
    pub max_features: Option<usize>,
    pub sublinear_tf: bool,
}

impl Default for TfidfConfig {
    fn default() -> Self {
        TfidfConfig {
            min_df: 2,
            max_features: Some(50_000),
            sublinear_tf: false,
        }
    }
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub dim: usize,
    pub entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            dim,
            entries: Vec::new(),
        }
    }

    /// Builds a vector from unordered pairs, summing duplicates and dropping
    /// zeros.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, v) in pairs {
            if i >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: i + 1,
                });
            }
            if !v.is_finite() {
                return Err(Error::Numerical(format!("non-finite value at index {i}")));
            }
            *map.entry(i).or_insert(0.0) += v;
        }
        Ok(SparseVector {
            dim,
            entries: map.into_iter().filter(|(_, v)| *v != 0.0).collect(),
        })
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * dense[i]).sum()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }
}

/// Fitted vocabulary and idf weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    pub vocabulary: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
    pub config: TfidfConfig,
}

/// Why a token seen during fitting is absent from the vocabulary.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VocabularyStats {
    pub distinct_tokens: usize,
    pub below_min_df: usize,
    pub over_max_features: usize,
}

pub fn fit_tfidf<S: AsRef<str>>(documents: &[S], config: TfidfConfig) -> Result<TfidfModel> {
    fit_tfidf_with_stats(documents, config).map(|(m, _)| m)
}

pub fn fit_tfidf_with_stats<S: AsRef<str>>(
    documents: &[S],
    config: TfidfConfig,
) -> Result<(TfidfModel, VocabularyStats)> {
    if documents.is_empty() {
        return Err(Error::InvalidInput("cannot fit TF-IDF on an empty corpus".into()));
    }
    let mut df: HashMap<String, usize> = HashMap::new();
    for doc in documents {
        let uniq: HashSet<String> = tokens(doc.as_ref()).into_iter().collect();
        for t in uniq {
            *df.entry(t).or_default() += 1;
        }
    }
    let mut stats = VocabularyStats {
        distinct_tokens: df.len(),
        ..Default::default()
    };
    let mut kept: Vec<(String, usize)> = df.into_iter().filter(|(_, n)| *n >= config.min_df).collect();
    stats.below_min_df = stats.distinct_tokens - kept.len();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if let Some(max) = config.max_features {
        if kept.len() > max {
            stats.over_max_features = kept.len() - max;
            kept.truncate(max);
        }
    }
    kept.sort_by(|a, b| a.0.cmp(&b.0));

    let n = documents.len() as f64;
    let mut vocabulary = BTreeMap::new();
    let mut idf = Vec::with_capacity(kept.len());
    for (i, (token, count)) in kept.into_iter().enumerate() {
        idf.push(((1.0 + n) / (1.0 + count as f64)).ln() + 1.0);
        vocabulary.insert(token, i);
    }
    Ok((
        TfidfModel {
            vocabulary,
            idf,
            config,
        },
        stats,
    ))
}

impl TfidfModel {
    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    pub fn transform(&self, document: &str) -> SparseVector {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for t in tokens(document) {
            if let Some(&i) = self.vocabulary.get(&t) {
                *counts.entry(i).or_default() += 1;
            }
        }
        let mut entries: Vec<(usize, f64)> = counts
            .into_iter()
            .map(|(i, c)| {
                let tf = if self.config.sublinear_tf {
                    1.0 + (c as f64).ln()
                } else {
                    c as f64
                };
                (i, tf * self.idf[i])
            })
            .collect();
        let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for e in &mut entries {
                e.1 /= norm;
            }
        }
        SparseVector {
            dim: self.dim(),
            entries,
        }
    }

    pub fn transform_all<S: AsRef<str>>(&self, documents: &[S]) -> Vec<SparseVector> {
        documents.iter().map(|d| self.transform(d.as_ref())).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec(self).map_err(|e| Error::Other(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let model: TfidfModel =
            serde_json::from_slice(&bytes).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        if model.vocabulary.len() != model.idf.len() || model.vocabulary.values().any(|&i| i >= model.idf.len()) {
            return Err(Error::Schema("vocabulary and idf disagree".into()));
        }
        Ok(model)
    }
}
