#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde::Deserialize;
use stereoaudit::corpus::{build_corpus, BuiltCorpus, SplitSpec, Strictness};
use stereoaudit::inference::{ProbVector, StubClassifier};

pub fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture(name: &str) -> PathBuf {
    root().join("tests/fixtures").join(name)
}

pub fn raw_sources() -> (Vec<u8>, Vec<u8>) {
    (
        std::fs::read(root().join("data/raw/stereoset_dev.json")).unwrap(),
        std::fs::read(root().join("data/raw/crows_pairs.csv")).unwrap(),
    )
}

pub fn corpus() -> BuiltCorpus {
    let (ss, cp) = raw_sources();
    build_corpus(&ss, &cp, Strictness::default(), SplitSpec::default()).unwrap()
}

#[derive(Deserialize)]
struct Table {
    classifier_id: String,
    default: [f64; 9],
    entries: Vec<Entry>,
}

#[derive(Deserialize)]
struct Entry {
    sentence: String,
    probs: [f64; 9],
}

/// The lookup classifier for the mock server's sentence bank.
pub fn table_classifier(path: &Path) -> StubClassifier {
    let t: Table = serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
    let mut c = StubClassifier::constant(t.classifier_id, ProbVector::new(t.default).unwrap());
    for e in t.entries {
        c = c.with_entry(e.sentence, ProbVector::new(e.probs).unwrap());
    }
    c
}

pub fn always_unrelated() -> StubClassifier {
    StubClassifier::constant("always-unrelated", ProbVector::one_hot(0).unwrap())
}
