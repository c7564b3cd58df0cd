use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Classifier, ProbVector};
use crate::error::Result;

/// Lookup-table classifier: exact sentence match, else `default`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StubClassifier {
    pub id: String,
    pub default: ProbVector,
    #[serde(default)]
    pub table: BTreeMap<String, ProbVector>,
}

impl StubClassifier {
    pub fn constant(id: impl Into<String>, p: ProbVector) -> Self {
        StubClassifier {
            id: id.into(),
            default: p,
            table: BTreeMap::new(),
        }
    }

    pub fn with_entry(mut self, sentence: impl Into<String>, p: ProbVector) -> Self {
        self.table.insert(sentence.into(), p);
        self
    }
}

impl Classifier for StubClassifier {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn predict(&self, sentence: &str) -> Result<ProbVector> {
        Ok(*self.table.get(sentence).unwrap_or(&self.default))
    }
}

/// Wraps a pure function as a classifier.
pub struct FnClassifier<F> {
    id: String,
    f: F,
}

impl<F> FnClassifier<F>
where
    F: Fn(&str) -> Result<ProbVector> + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        FnClassifier { id: id.into(), f }
    }
}

impl<F> Classifier for FnClassifier<F>
where
    F: Fn(&str) -> Result<ProbVector> + Send + Sync,
{
    fn id(&self) -> String {
        self.id.clone()
    }

    fn predict(&self, sentence: &str) -> Result<ProbVector> {
        (self.f)(sentence)
    }
}
