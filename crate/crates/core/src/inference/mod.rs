//! Sentence-level classifiers producing 9-way probability vectors.
//!
//! Every backend reports probabilities indexed by label code, so `p[3]` is
//! always `stereotype_race` regardless of where the numbers came from.

mod baseline;
mod stub;
mod transformer;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::RandomModel;
use crate::error::{Error, Result};
use crate::labels::{Dimension, Label, NUM_LABELS};
use crate::textproc::MARKER;

pub use baseline::{BaselineClassifier, BaselineKind};
pub use stub::{FnClassifier, StubClassifier};
pub use transformer::{
    load_transformer, load_transformer_with_layout, LogitLayout, TokenizerSpec, TransformerClassifier, WordPiece,
};

const SUM_TOLERANCE: f64 = 1e-6;

/// Probability distribution over the nine labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector([f64; NUM_LABELS]);

impl ProbVector {
    pub fn new(p: [f64; NUM_LABELS]) -> Result<Self> {
        if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Numerical(format!("probability outside [0, 1]: {p:?}")));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Numerical(format!("probabilities sum to {sum}")));
        }
        Ok(ProbVector(p))
    }

    pub fn one_hot(code: usize) -> Result<Self> {
        Label::from_code(code)?;
        let mut p = [0.0; NUM_LABELS];
        p[code] = 1.0;
        Ok(ProbVector(p))
    }

    pub fn uniform() -> Self {
        ProbVector([1.0 / NUM_LABELS as f64; NUM_LABELS])
    }

    /// Softmax of exactly nine logits.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if logits.len() != NUM_LABELS {
            return Err(Error::DimensionMismatch {
                expected: NUM_LABELS,
                got: logits.len(),
            });
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite logit".into()));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p = [0.0; NUM_LABELS];
        let mut sum = 0.0;
        for (o, l) in p.iter_mut().zip(logits) {
            *o = (l - max).exp();
            sum += *o;
        }
        p.iter_mut().for_each(|v| *v /= sum);
        ProbVector::new(p)
    }

    pub fn get(&self, code: usize) -> f64 {
        self.0[code]
    }

    pub fn as_array(&self) -> &[f64; NUM_LABELS] {
        &self.0
    }

    /// Probability of `stereotype_<d>`.
    pub fn stereotype(&self, d: Dimension) -> f64 {
        self.0[d.stereotype_code()]
    }

    /// Highest-probability label code, lowest code on ties, and whether a
    /// tie occurred.
    pub fn argmax(&self) -> (usize, bool) {
        let mut best = 0;
        for i in 1..NUM_LABELS {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        let tied = (0..NUM_LABELS).any(|i| i != best && self.0[i] == self.0[best]);
        (best, tied)
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        let arr: [f64; NUM_LABELS] = v.try_into().map_err(|v: Vec<f64>| Error::DimensionMismatch {
            expected: NUM_LABELS,
            got: v.len(),
        })?;
        ProbVector::new(arr)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Self {
        p.0.to_vec()
    }
}

/// A pure sentence classifier. Implementations must be safe to call from
/// several threads and return identical output for identical input.
pub trait Classifier: Send + Sync {
    /// Identifier echoed into reports.
    fn id(&self) -> String;

    /// Backend prediction; callers go through [`Classifier::classify`].
    fn predict(&self, sentence: &str) -> Result<ProbVector>;

    /// Inputs truncated to the backend's maximum length so far.
    fn truncations(&self) -> u64 {
        0
    }

    /// Classifies one marker-free, non-empty sentence.
    fn classify(&self, sentence: &str) -> Result<ProbVector> {
        if sentence.trim().is_empty() {
            return Err(Error::InvalidInput("empty sentence".into()));
        }
        if sentence.contains(MARKER) {
            return Err(Error::InvalidInput(format!(
                "sentence contains `{MARKER}`; strip markers first"
            )));
        }
        self.predict(sentence)
    }

    /// Element `i` equals `classify(sentences[i])`; the first failure is
    /// returned with its index.
    fn classify_batch(&self, sentences: &[&str]) -> Result<Vec<ProbVector>> {
        sentences
            .iter()
            .enumerate()
            .map(|(index, s)| {
                self.classify(s).map_err(|e| Error::AtIndex {
                    index,
                    source: Box::new(e),
                })
            })
            .collect()
    }
}

impl<C: Classifier + ?Sized> Classifier for Box<C> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn predict(&self, sentence: &str) -> Result<ProbVector> {
        (**self).predict(sentence)
    }
    fn truncations(&self) -> u64 {
        (**self).truncations()
    }
}

impl<C: Classifier + ?Sized> Classifier for &C {
    fn id(&self) -> String {
        (**self).id()
    }
    fn predict(&self, sentence: &str) -> Result<ProbVector> {
        (**self).predict(sentence)
    }
    fn truncations(&self) -> u64 {
        (**self).truncations()
    }
}

/// On-disk model description, tagged by `kind`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelFile {
    Logreg(BaselineClassifier),
    Svm(BaselineClassifier),
    Random(RandomModel),
    Stub(StubClassifier),
}

/// Anything `--model` can name.
pub enum LoadedModel {
    Classifier(Box<dyn Classifier>),
    /// Draws labels directly, without looking at text.
    Random(RandomModel),
}

impl LoadedModel {
    pub fn classifier(self) -> Result<Box<dyn Classifier>> {
        match self {
            LoadedModel::Classifier(c) => Ok(c),
            LoadedModel::Random(_) => Err(Error::InvalidInput(
                "the random labeler does not produce probabilities for text".into(),
            )),
        }
    }
}

impl ModelFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec(self).map_err(|e| Error::Other(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
    }

    pub fn into_loaded(self) -> LoadedModel {
        match self {
            ModelFile::Logreg(c) | ModelFile::Svm(c) => LoadedModel::Classifier(Box::new(c)),
            ModelFile::Stub(s) => LoadedModel::Classifier(Box::new(s)),
            ModelFile::Random(r) => LoadedModel::Random(r),
        }
    }
}

/// Resolves a `--model` argument: an `.onnx` file (with its tokenizer spec
/// given explicitly or found as `tokenizer_spec.json` beside it) or a JSON
/// model file.
pub fn load_model(spec: &Path, tokenizer_spec: Option<&Path>) -> Result<LoadedModel> {
    if spec.extension().is_some_and(|e| e == "onnx") {
        let tok = match tokenizer_spec {
            Some(t) => t.to_path_buf(),
            None => spec.with_file_name("tokenizer_spec.json"),
        };
        return Ok(LoadedModel::Classifier(Box::new(load_transformer(spec, &tok)?)));
    }
    Ok(ModelFile::load(spec)?.into_loaded())
}
