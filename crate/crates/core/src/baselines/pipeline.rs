use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{train_logreg, train_svm_ovr, LogRegHyper, RandomModel, SigmoidKernel, SvmHyper};
use crate::corpus::{MgsRecord, Split};
use crate::error::{Error, Result};
use crate::features::{fit_tfidf_with_stats, TfidfConfig};
use crate::inference::{BaselineClassifier, BaselineKind, ModelFile};
use crate::labels::{Dimension, NUM_LABELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Logreg,
    Svm,
    Random,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Algo::Logreg => "logreg",
            Algo::Svm => "svm",
            Algo::Random => "random",
        })
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logreg" => Ok(Algo::Logreg),
            "svm" => Ok(Algo::Svm),
            "random" => Ok(Algo::Random),
            other => Err(Error::InvalidInput(format!("unknown algorithm `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub algo: Algo,
    /// Stratified, seeded cap on the number of training records.
    pub subsample: Option<usize>,
    pub seed: u64,
    /// Restricts training to one dimension's records and its three labels.
    pub dimension: Option<Dimension>,
    pub tfidf: TfidfConfig,
    pub logreg: LogRegHyper,
    pub svm: SvmHyper,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algo: Algo::Logreg,
            subsample: None,
            seed: 42,
            dimension: None,
            tfidf: TfidfConfig::default(),
            logreg: LogRegHyper::default(),
            svm: SvmHyper::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_records: usize,
    pub used_records: usize,
    pub vocabulary: usize,
    pub below_min_df: usize,
    pub over_max_features: usize,
    pub converged: bool,
    pub per_label: BTreeMap<usize, usize>,
}

/// At most `n` records, drawn per label in proportion to label frequency
/// (largest remainder), shuffled with `seed`. Input order is preserved.
pub fn stratified_subsample<'a>(records: &[&'a MgsRecord], n: usize, seed: u64) -> Vec<&'a MgsRecord> {
    if n >= records.len() {
        return records.to_vec();
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); NUM_LABELS];
    for (i, r) in records.iter().enumerate() {
        groups[r.label.code()].push(i);
    }
    let frac = n as f64 / records.len() as f64;
    let exact: Vec<f64> = groups.iter().map(|g| g.len() as f64 * frac).collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..NUM_LABELS).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let short = n - quota.iter().sum::<usize>();
    for &k in order.iter().take(short) {
        quota[k] += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; records.len()];
    for (k, g) in groups.iter_mut().enumerate() {
        g.shuffle(&mut rng);
        for &i in &g[..quota[k].min(g.len())] {
            keep[i] = true;
        }
    }
    records.iter().zip(keep).filter(|(_, k)| *k).map(|(r, _)| *r).collect()
}

/// Training records of a corpus: those marked `train`, narrowed to one
/// dimension when asked.
pub fn training_records(records: &[MgsRecord], dimension: Option<Dimension>) -> Result<Vec<&MgsRecord>> {
    if records.iter().any(|r| r.split.is_none()) {
        return Err(Error::Schema("corpus records lack a split assignment".into()));
    }
    let out: Vec<&MgsRecord> = records
        .iter()
        .filter(|r| r.split == Some(Split::Train))
        .filter(|r| dimension.is_none() || r.dimension == dimension)
        .collect();
    if out.is_empty() {
        return Err(Error::InvalidInput("no training records".into()));
    }
    Ok(out)
}

/// Fits TF-IDF and the chosen model on the corpus's training split.
pub fn train_baseline(records: &[MgsRecord], config: &TrainConfig) -> Result<(ModelFile, TrainReport)> {
    let train = training_records(records, config.dimension)?;
    let used = match config.subsample {
        Some(n) => stratified_subsample(&train, n, config.seed),
        None => train.clone(),
    };
    let mut report = TrainReport {
        train_records: train.len(),
        used_records: used.len(),
        converged: true,
        ..TrainReport::default()
    };
    for r in &used {
        *report.per_label.entry(r.label.code()).or_default() += 1;
    }
    if config.algo == Algo::Random {
        return Ok((
            ModelFile::Random(RandomModel {
                seed: config.seed,
                num_classes: NUM_LABELS,
            }),
            report,
        ));
    }

    let texts: Vec<&str> = used.iter().map(|r| r.text.as_str()).collect();
    let (tfidf, stats) = fit_tfidf_with_stats(&texts, config.tfidf)?;
    report.vocabulary = tfidf.dim();
    report.below_min_df = stats.below_min_df;
    report.over_max_features = stats.over_max_features;
    let x = tfidf.transform_all(&texts);
    let classes: Vec<usize> = report.per_label.keys().copied().collect();
    if classes.len() < 2 {
        return Err(Error::InvalidInput("training data has fewer than two labels".into()));
    }
    let y: Vec<usize> = used
        .iter()
        .map(|r| classes.binary_search(&r.label.code()).expect("label collected above"))
        .collect();
    let scope = config.dimension.map_or_else(|| "all".to_string(), |d| d.to_string());
    let id = format!("{}-{scope}", config.algo);
    let file = match config.algo {
        Algo::Logreg => {
            let m = train_logreg(&x, &y, &classes, config.logreg)?;
            report.converged = m.converged;
            ModelFile::Logreg(BaselineClassifier {
                id,
                tfidf,
                model: BaselineKind::Logreg(m),
            })
        }
        Algo::Svm => {
            let kernel = SigmoidKernel::scaled_for(&x);
            let m = train_svm_ovr(&x, &y, &classes, config.svm, kernel)?;
            report.converged = m.converged();
            ModelFile::Svm(BaselineClassifier {
                id,
                tfidf,
                model: BaselineKind::Svm(m),
            })
        }
        Algo::Random => unreachable!(),
    };
    Ok((file, report))
}
