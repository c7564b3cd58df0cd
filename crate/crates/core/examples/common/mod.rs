#![allow(dead_code)]

use std::path::PathBuf;

use stereoaudit::baselines::{train_baseline, Algo, TrainConfig};
use stereoaudit::corpus::{build_corpus, BuiltCorpus, MgsRecord, Split, SplitSpec, Strictness};
use stereoaudit::inference::Classifier;

pub fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

/// The corpus rebuilt from the bundled raw files with the default split.
pub fn corpus() -> BuiltCorpus {
    let read = |p: &str| std::fs::read(root().join(p)).unwrap_or_else(|e| panic!("{p}: {e}"));
    build_corpus(
        &read("data/raw/stereoset_dev.json"),
        &read("data/raw/crows_pairs.csv"),
        Strictness::default(),
        SplitSpec::default(),
    )
    .expect("corpus builds")
}

pub fn test_split(records: &[MgsRecord]) -> Vec<MgsRecord> {
    records
        .iter()
        .filter(|r| r.split == Some(Split::Test))
        .cloned()
        .collect()
}

/// A logistic-regression classifier on a stratified subsample, quick enough
/// for demonstrations.
pub fn quick_logreg(records: &[MgsRecord], subsample: usize) -> Box<dyn Classifier> {
    let cfg = TrainConfig {
        algo: Algo::Logreg,
        subsample: Some(subsample),
        ..TrainConfig::default()
    };
    let (file, _) = train_baseline(records, &cfg).expect("training");
    file.into_loaded().classifier().expect("text classifier")
}
