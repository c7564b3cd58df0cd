//! Confusion matrices, macro precision/recall/F1 and the two evaluation
//! protocols: full 9-way evaluation and the per-dimension 3-way view.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::baselines::{predict_random, RandomModel};
use crate::corpus::MgsRecord;
use crate::error::{Error, Result};
use crate::inference::Classifier;
use crate::labels::{label_names, Dimension, Label, NUM_LABELS};

/// Counts with rows = gold class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn from_counts(class_names: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = class_names.len();
        if counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidInput(format!("confusion matrix must be {k}x{k}")));
        }
        Ok(ConfusionMatrix { class_names, counts })
    }
}

/// Builds the matrix from aligned gold and predicted class indices.
pub fn confusion(gold: &[usize], pred: &[usize], class_names: &[String]) -> Result<ConfusionMatrix> {
    if gold.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            expected: gold.len(),
            got: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::InvalidInput("nothing to evaluate".into()));
    }
    let k = class_names.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (&g, &p) in gold.iter().zip(pred) {
        if g >= k || p >= k {
            return Err(Error::InvalidInput(format!("class index out of range 0..{k}")));
        }
        counts[g][p] += 1;
    }
    Ok(ConfusionMatrix {
        class_names: class_names.to_vec(),
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// What produced a report: model, corpus and protocol.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub model_id: String,
    pub corpus_hash: String,
    pub protocol: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: Vec<ClassMetrics>,
    /// Classes averaged into the macro scores.
    pub macro_classes: Vec<String>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub instances: u64,
    pub confusion: ConfusionMatrix,
    pub config: ReportConfig,
}

impl EvalReport {
    pub fn macro_metrics(&self) -> MacroMetrics {
        MacroMetrics {
            precision: self.macro_precision,
            recall: self.macro_recall,
            f1: self.macro_f1,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class metrics with 0/0 = 0, macro-averaged over the classes that
/// occur in gold.
pub fn macro_prf(matrix: &ConfusionMatrix) -> EvalReport {
    let present: Vec<usize> = (0..matrix.num_classes())
        .filter(|&c| matrix.counts[c].iter().sum::<u64>() > 0)
        .collect();
    macro_prf_over(matrix, &present)
}

/// Per-class metrics, macro-averaged over `classes` only.
pub fn macro_prf_over(matrix: &ConfusionMatrix, classes: &[usize]) -> EvalReport {
    let k = matrix.num_classes();
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = matrix.counts[c][c];
            let support: u64 = matrix.counts[c].iter().sum();
            let predicted: u64 = (0..k).map(|g| matrix.counts[g][c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                name: matrix.class_names[c].clone(),
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| {
        if classes.is_empty() {
            0.0
        } else {
            classes.iter().map(|&c| f(&per_class[c])).sum::<f64>() / classes.len() as f64
        }
    };
    EvalReport {
        macro_classes: classes.iter().map(|&c| matrix.class_names[c].clone()).collect(),
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        per_class,
        instances: matrix.total(),
        confusion: matrix.clone(),
        config: ReportConfig::default(),
    }
}

/// Argmax label codes for a batch of sentences, classified on up to
/// `threads` worker threads; output order matches input order.
pub fn predict_labels<C: Classifier + ?Sized>(
    classifier: &C,
    sentences: &[&str],
    threads: usize,
) -> Result<Vec<usize>> {
    let threads = threads.max(1);
    let chunk = sentences.len().div_ceil(threads).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = sentences
            .chunks(chunk)
            .enumerate()
            .map(|(ci, part)| {
                s.spawn(move || {
                    part.iter()
                        .enumerate()
                        .map(|(i, t)| {
                            classifier
                                .classify(t)
                                .map(|p| p.argmax().0)
                                .map_err(|e| Error::AtIndex {
                                    index: ci * chunk + i,
                                    source: Box::new(e),
                                })
                        })
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(sentences.len());
        for h in handles {
            out.extend(h.join().expect("classification worker panicked")?);
        }
        Ok(out)
    })
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get()).min(8)
}

/// 9-way evaluation from label codes.
pub fn eval_labels(gold: &[usize], pred: &[usize], config: ReportConfig) -> Result<EvalReport> {
    let m = confusion(gold, pred, &label_names())?;
    let mut report = macro_prf(&m);
    report.config = config;
    Ok(report)
}

/// Full 9-way evaluation of a classifier on test records.
pub fn eval_full<C: Classifier + ?Sized>(classifier: &C, test: &[MgsRecord], corpus_hash: &str) -> Result<EvalReport> {
    let texts: Vec<&str> = test.iter().map(|r| r.text.as_str()).collect();
    let pred = predict_labels(classifier, &texts, default_threads())?;
    let gold: Vec<usize> = test.iter().map(|r| r.label.code()).collect();
    eval_labels(
        &gold,
        &pred,
        ReportConfig {
            model_id: classifier.id(),
            corpus_hash: corpus_hash.to_string(),
            protocol: "full-9-way".into(),
            notes: Vec::new(),
        },
    )
}

/// Full 9-way evaluation of the seeded random labeler.
pub fn eval_random(model: &RandomModel, test: &[MgsRecord], corpus_hash: &str) -> Result<EvalReport> {
    let pred = predict_random(model, test.len());
    let gold: Vec<usize> = test.iter().map(|r| r.label.code()).collect();
    eval_labels(
        &gold,
        &pred,
        ReportConfig {
            model_id: format!("random(seed={})", model.seed),
            corpus_hash: corpus_hash.to_string(),
            protocol: "full-9-way".into(),
            notes: Vec::new(),
        },
    )
}

/// How 9-way predictions are mapped onto a single dimension's classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Projection {
    /// Predictions outside {unrelated, stereotype_d, anti-stereotype_d}
    /// become a synthetic `other` class that never matches gold.
    StrictOther,
}

impl Projection {
    pub fn describe(self) -> &'static str {
        match self {
            Projection::StrictOther => {
                "subset: gold in {unrelated, stereotype_d, anti-stereotype_d} with record dimension d; \
                 other-dimension predictions projected to `other`; macro over the 3 target classes"
            }
        }
    }
}

/// Records that belong to dimension `d`'s 3-way evaluation.
pub fn dimension_subset(records: &[MgsRecord], d: Dimension) -> Vec<&MgsRecord> {
    records
        .iter()
        .filter(|r| match r.label {
            Label::Unrelated => r.dimension == Some(d),
            Label::Biased(_, rd) => rd == d,
        })
        .collect()
}

/// Class index in the per-dimension view: 0 unrelated, 1 stereotype,
/// 2 anti-stereotype, 3 other.
fn project(code: usize, d: Dimension) -> usize {
    if code == 0 {
        0
    } else if code == d.stereotype_code() {
        1
    } else if code == d.anti_stereotype_code() {
        2
    } else {
        3
    }
}

/// Per-dimension evaluation from gold/predicted 9-way codes already
/// restricted to the dimension's subset.
pub fn eval_dimension_labels(
    gold: &[usize],
    pred: &[usize],
    d: Dimension,
    projection: Projection,
    mut config: ReportConfig,
) -> Result<EvalReport> {
    if gold.is_empty() {
        return Err(Error::InvalidInput(format!("dimension {d} has no test support")));
    }
    let names = vec![
        "unrelated".to_string(),
        format!("stereotype_{d}"),
        format!("anti-stereotype_{d}"),
        "other".to_string(),
    ];
    let g: Vec<usize> = gold.iter().map(|&c| project(c, d)).collect();
    if g.contains(&3) {
        return Err(Error::InvalidInput(format!(
            "gold labels outside dimension {d}'s subset"
        )));
    }
    let p: Vec<usize> = pred.iter().map(|&c| project(c, d)).collect();
    let m = confusion(&g, &p, &names)?;
    let mut report = macro_prf_over(&m, &[0, 1, 2]);
    config.protocol = format!("dimension={d}; {}", projection.describe());
    report.config = config;
    Ok(report)
}

/// 3-way evaluation of any 9-way classifier on one dimension.
pub fn eval_dimension<C: Classifier + ?Sized>(
    classifier: &C,
    test: &[MgsRecord],
    d: Dimension,
    projection: Projection,
    corpus_hash: &str,
) -> Result<EvalReport> {
    let subset = dimension_subset(test, d);
    if subset.is_empty() {
        return Err(Error::InvalidInput(format!("dimension {d} has no test support")));
    }
    let texts: Vec<&str> = subset.iter().map(|r| r.text.as_str()).collect();
    let pred = predict_labels(classifier, &texts, default_threads())?;
    let gold: Vec<usize> = subset.iter().map(|r| r.label.code()).collect();
    eval_dimension_labels(
        &gold,
        &pred,
        d,
        projection,
        ReportConfig {
            model_id: classifier.id(),
            corpus_hash: corpus_hash.to_string(),
            ..ReportConfig::default()
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub dimension: Dimension,
    pub multi: MacroMetrics,
    pub single: MacroMetrics,
    /// multi minus single.
    pub delta: MacroMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub multi_dominates_f1: bool,
}

/// Side-by-side multi-class vs single-dimension metrics for all four
/// dimensions.
pub fn compare_multi_vs_single(
    multi: &BTreeMap<Dimension, MacroMetrics>,
    single: &BTreeMap<Dimension, MacroMetrics>,
) -> Result<Comparison> {
    let mut rows = Vec::with_capacity(4);
    for d in [
        Dimension::Race,
        Dimension::Profession,
        Dimension::Gender,
        Dimension::Religion,
    ] {
        let (Some(m), Some(s)) = (multi.get(&d), single.get(&d)) else {
            return Err(Error::InvalidInput(format!("missing reports for dimension {d}")));
        };
        rows.push(ComparisonRow {
            dimension: d,
            multi: *m,
            single: *s,
            delta: MacroMetrics {
                precision: m.precision - s.precision,
                recall: m.recall - s.recall,
                f1: m.f1 - s.f1,
            },
        });
    }
    let multi_dominates_f1 = rows.iter().all(|r| r.multi.f1 > r.single.f1);
    Ok(Comparison {
        rows,
        multi_dominates_f1,
    })
}

/// Rows of (method, precision, recall, F1).
pub fn render_method_table(rows: &[(String, MacroMetrics)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("Method".len());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>9}  {:>6}  {:>8}",
        "Method", "Precision", "Recall", "F1 Score"
    );
    for (name, m) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>9.2}  {:>6.2}  {:>8.2}",
            name, m.precision, m.recall, m.f1
        );
    }
    out
}

pub fn render_comparison(c: &Comparison) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<11} {:<8} {:>9} {:>7} {:>8}",
        "Dimension", "Setting", "Precision", "Recall", "F1 Score"
    );
    for r in &c.rows {
        for (setting, m) in [("Multi", r.multi), ("Single", r.single)] {
            let _ = writeln!(
                out,
                "{:<11} {:<8} {:>9.3} {:>7.3} {:>8.3}",
                if setting == "Multi" { r.dimension.as_str() } else { "" },
                setting,
                m.precision,
                m.recall,
                m.f1
            );
        }
    }
    let _ = writeln!(out, "multi dominates F1 in all dimensions: {}", c.multi_dominates_f1);
    out
}

/// Per-class table followed by the macro line.
pub fn render_report(r: &EvalReport) -> String {
    let width = r.per_class.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
    let mut out = String::new();
    let _ = writeln!(out, "model: {}  protocol: {}", r.config.model_id, r.config.protocol);
    let _ = writeln!(
        out,
        "{:<width$}  {:>9}  {:>6}  {:>8}  {:>7}",
        "class", "precision", "recall", "f1", "support"
    );
    for c in &r.per_class {
        let _ = writeln!(
            out,
            "{:<width$}  {:>9.3}  {:>6.3}  {:>8.3}  {:>7}",
            c.name, c.precision, c.recall, c.f1, c.support
        );
    }
    let _ = writeln!(
        out,
        "{:<width$}  {:>9.3}  {:>6.3}  {:>8.3}  {:>7}",
        "macro", r.macro_precision, r.macro_recall, r.macro_f1, r.instances
    );
    out
}

/// Number of label classes in the 9-way scheme, re-exported for callers
/// that build matrices by hand.
pub const FULL_CLASSES: usize = NUM_LABELS;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{ProbVector, StubClassifier};

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn confusion_basics() {
        let m = confusion(&[0, 1, 2], &[0, 1, 2], &names(3)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.counts[i][j], u64::from(i == j));
            }
        }
        let one = confusion(&[1], &[0], &names(2)).unwrap();
        assert_eq!(one.total(), 1);
        assert_eq!(one.counts[1][0], 1);
        assert!(confusion(&[0], &[0, 1], &names(2)).is_err());
        let a = confusion(&[0, 1, 1, 0], &[1, 1, 0, 0], &names(2)).unwrap();
        let b = confusion(&[0, 1, 0, 1], &[0, 0, 1, 1], &names(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn perfect_and_all_wrong() {
        let r = macro_prf(&confusion(&[0, 1, 2], &[0, 1, 2], &names(3)).unwrap());
        assert_eq!((r.macro_precision, r.macro_recall, r.macro_f1), (1.0, 1.0, 1.0));
        let r = macro_prf(&confusion(&[0, 1, 2], &[1, 2, 0], &names(3)).unwrap());
        assert_eq!((r.macro_precision, r.macro_recall, r.macro_f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn hand_computed_two_class_matrix() {
        let m = ConfusionMatrix::from_counts(names(2), vec![vec![3, 1], vec![2, 4]]).unwrap();
        let r = macro_prf(&m);
        let (c0, c1) = (&r.per_class[0], &r.per_class[1]);
        assert!((c0.precision - 0.6).abs() < 1e-12);
        assert!((c0.recall - 0.75).abs() < 1e-12);
        assert!((c0.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((c1.precision - 0.8).abs() < 1e-12);
        assert!((c1.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((c1.f1 - 8.0 / 11.0).abs() < 1e-12);
        assert!((r.macro_f1 - (2.0 / 3.0 + 8.0 / 11.0) / 2.0).abs() < 1e-12);
        assert!((r.macro_f1 - 0.697).abs() < 5e-4);
    }

    fn rec(code: usize, dim: Dimension, text: &str) -> MgsRecord {
        MgsRecord {
            id: text.into(),
            text: text.into(),
            marked_text: text.into(),
            label: Label::from_code(code).unwrap(),
            dimension: Some(dim),
            source: "t".into(),
            split: None,
        }
    }

    fn oracle_stub(records: &[MgsRecord]) -> StubClassifier {
        let mut stub = StubClassifier::constant("oracle", ProbVector::uniform());
        for r in records {
            stub = stub.with_entry(r.text.clone(), ProbVector::one_hot(r.label.code()).unwrap());
        }
        stub
    }

    fn test_set() -> Vec<MgsRecord> {
        let mut v = Vec::new();
        for (i, d) in Dimension::ALL.iter().enumerate() {
            v.push(rec(0, *d, &format!("u{i}")));
            v.push(rec(d.stereotype_code(), *d, &format!("s{i}")));
            v.push(rec(d.anti_stereotype_code(), *d, &format!("a{i}")));
        }
        v
    }

    #[test]
    fn oracle_classifier_scores_one_everywhere() {
        let test = test_set();
        let stub = oracle_stub(&test);
        let r = eval_full(&stub, &test, "h").unwrap();
        assert_eq!(r.macro_f1, 1.0);
        for d in Dimension::ALL {
            let r = eval_dimension(&stub, &test, d, Projection::StrictOther, "h").unwrap();
            assert_eq!((r.macro_precision, r.macro_recall, r.macro_f1), (1.0, 1.0, 1.0));
            assert_eq!(r.instances, 3);
        }
    }

    #[test]
    fn other_dimension_predictions_never_count() {
        let test = test_set();
        // always predicts stereotype_religion
        let stub = StubClassifier::constant("c", ProbVector::one_hot(7).unwrap());
        let r = eval_dimension(&stub, &test, Dimension::Race, Projection::StrictOther, "h").unwrap();
        assert_eq!(r.per_class[1].recall, 0.0);
        assert_eq!(r.per_class[2].recall, 0.0);
        assert_eq!(r.macro_classes.len(), 3);
    }

    #[test]
    fn constant_class_recall_by_counting() {
        let test = test_set();
        let stub = StubClassifier::constant("c", ProbVector::one_hot(3).unwrap());
        let r = eval_full(&stub, &test, "h").unwrap();
        // only stereotype_race is ever right: recall 1 for it, 0 elsewhere,
        // averaged over the 9 classes present in gold
        assert!((r.macro_recall - 1.0 / 9.0).abs() < 1e-15);
        // precision: 1 correct of 12 predictions in that class
        assert!((r.macro_precision - (1.0 / 12.0) / 9.0).abs() < 1e-15);
    }

    #[test]
    fn zero_support_dimension_is_error() {
        let test = vec![rec(0, Dimension::Race, "x")];
        let stub = oracle_stub(&test);
        assert!(eval_dimension(&stub, &test, Dimension::Gender, Projection::StrictOther, "h").is_err());
    }

    fn table1() -> (BTreeMap<Dimension, MacroMetrics>, BTreeMap<Dimension, MacroMetrics>) {
        let m = |p, r, f| MacroMetrics {
            precision: p,
            recall: r,
            f1: f,
        };
        let multi = BTreeMap::from([
            (Dimension::Race, m(0.882, 0.883, 0.882)),
            (Dimension::Profession, m(0.850, 0.847, 0.847)),
            (Dimension::Gender, m(0.762, 0.724, 0.698)),
            (Dimension::Religion, m(0.807, 0.814, 0.810)),
        ]);
        let single = BTreeMap::from([
            (Dimension::Race, m(0.824, 0.820, 0.821)),
            (Dimension::Profession, m(0.781, 0.778, 0.778)),
            (Dimension::Gender, m(0.665, 0.660, 0.661)),
            (Dimension::Religion, m(0.719, 0.721, 0.718)),
        ]);
        (multi, single)
    }

    #[test]
    fn published_table_shows_multi_dominance() {
        let (multi, single) = table1();
        let c = compare_multi_vs_single(&multi, &single).unwrap();
        assert!(c.multi_dominates_f1);
        let gender = c.rows.iter().find(|r| r.dimension == Dimension::Gender).unwrap();
        assert!((gender.delta.f1 - 0.037).abs() < 1e-12);
        let same = compare_multi_vs_single(&multi, &multi).unwrap();
        assert!(same.rows.iter().all(|r| r.delta.f1 == 0.0 && r.delta.precision == 0.0));
        assert!(!same.multi_dominates_f1);
        let mut partial = multi.clone();
        partial.remove(&Dimension::Religion);
        assert!(compare_multi_vs_single(&partial, &single).is_err());
        assert!(render_comparison(&c).contains("0.698"));
    }
}
