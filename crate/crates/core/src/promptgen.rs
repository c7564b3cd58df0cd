//! Prompt library: text preceding the first marked span of each record,
//! longest records first, kept only when the classifier calls it unrelated.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::MgsRecord;
use crate::error::{Error, Result};
use crate::inference::{Classifier, ProbVector};
use crate::labels::Dimension;
use crate::textproc::{prompt_prefix, word_count, MARKER};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptEntry {
    pub id: String,
    pub dimension: Dimension,
    pub text: String,
    pub word_count: usize,
    pub source_record_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub quota: usize,
    pub min_words: usize,
    /// Skip a prefix already admitted for the same dimension.
    pub dedupe: bool,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            quota: 200,
            min_words: 3,
            dedupe: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionStats {
    pub candidates: usize,
    pub tested: usize,
    pub admitted: usize,
    pub rejected_not_unrelated: usize,
    pub too_short: usize,
    pub duplicates: usize,
    /// Admitted prompts whose argmax was a tie resolved toward unrelated.
    pub ties_flagged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptLibrary {
    pub entries: BTreeMap<Dimension, Vec<PromptEntry>>,
    pub config: PromptConfig,
    pub classifier_id: String,
    pub stats: BTreeMap<Dimension, DimensionStats>,
}

impl PromptLibrary {
    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entries in dimension order, each dimension in library order.
    pub fn iter(&self) -> impl Iterator<Item = &PromptEntry> {
        self.entries.values().flatten()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Validation {
    pub unrelated: bool,
    pub tied: bool,
    pub probs: ProbVector,
}

/// True iff the argmax label is unrelated (ties go to the lowest code).
pub fn validate_prompt<C: Classifier + ?Sized>(classifier: &C, text: &str) -> Result<Validation> {
    let probs = classifier.classify(text)?;
    let (code, tied) = probs.argmax();
    Ok(Validation {
        unrelated: code == 0,
        tied,
        probs,
    })
}

struct Candidate<'a> {
    record: &'a MgsRecord,
    prefix: String,
    order_words: usize,
}

/// Candidates per dimension, sorted by the record's marked-text word count
/// descending, ties by record id.
fn candidates(records: &[MgsRecord]) -> BTreeMap<Dimension, Vec<Candidate<'_>>> {
    let mut by_dim: BTreeMap<Dimension, Vec<Candidate>> = BTreeMap::new();
    for r in records {
        let (Some(d), Some(prefix)) = (r.dimension, prompt_prefix(&r.marked_text)) else {
            continue;
        };
        by_dim.entry(d).or_default().push(Candidate {
            record: r,
            prefix,
            order_words: word_count(&r.marked_text),
        });
    }
    for v in by_dim.values_mut() {
        v.sort_by(|a, b| {
            b.order_words
                .cmp(&a.order_words)
                .then_with(|| a.record.id.cmp(&b.record.id))
        });
    }
    by_dim
}

const BATCH: usize = 256;

fn validate_batch<C: Classifier + ?Sized>(classifier: &C, texts: &[&str]) -> Result<Vec<Validation>> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(8);
    let chunk = texts.len().div_ceil(threads).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = texts
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|t| validate_prompt(classifier, t))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(texts.len());
        for h in handles {
            out.extend(h.join().expect("validation worker panicked")?);
        }
        Ok(out)
    })
}

pub fn generate_prompts<C: Classifier + ?Sized>(
    records: &[MgsRecord],
    classifier: &C,
    config: &PromptConfig,
) -> Result<PromptLibrary> {
    if config.quota == 0 {
        return Err(Error::InvalidInput("quota must be positive".into()));
    }
    let by_dim = candidates(records);
    let mut entries = BTreeMap::new();
    let mut stats = BTreeMap::new();
    for d in Dimension::ALL {
        let cands = by_dim.get(&d).map(Vec::as_slice).unwrap_or(&[]);
        let mut st = DimensionStats {
            candidates: cands.len(),
            ..DimensionStats::default()
        };
        let mut admitted: Vec<PromptEntry> = Vec::new();
        let mut seen: HashSet<&str> = HashSet::new();
        let eligible: Vec<&Candidate> = cands
            .iter()
            .filter(|c| {
                if word_count(&c.prefix) < config.min_words {
                    st.too_short += 1;
                    false
                } else {
                    true
                }
            })
            .collect();
        'outer: for batch in eligible.chunks(BATCH) {
            let texts: Vec<&str> = batch.iter().map(|c| c.prefix.as_str()).collect();
            let verdicts = validate_batch(classifier, &texts)?;
            for (c, v) in batch.iter().zip(verdicts) {
                if admitted.len() >= config.quota {
                    break 'outer;
                }
                if config.dedupe && seen.contains(c.prefix.as_str()) {
                    st.duplicates += 1;
                    continue;
                }
                st.tested += 1;
                if !v.unrelated {
                    st.rejected_not_unrelated += 1;
                    continue;
                }
                if v.tied {
                    st.ties_flagged += 1;
                }
                seen.insert(c.prefix.as_str());
                admitted.push(PromptEntry {
                    id: String::new(),
                    dimension: d,
                    word_count: word_count(&c.prefix),
                    text: c.prefix.clone(),
                    source_record_id: c.record.id.clone(),
                });
            }
        }
        st.admitted = admitted.len();
        if admitted.is_empty() {
            return Err(Error::InvalidInput(format!(
                "no prompts admitted for dimension {d}: {} candidates, {} too short, {} duplicates, {} classified as biased",
                st.candidates, st.too_short, st.duplicates, st.rejected_not_unrelated
            )));
        }
        admitted.sort_by(|a, b| {
            b.word_count
                .cmp(&a.word_count)
                .then_with(|| a.source_record_id.cmp(&b.source_record_id))
        });
        for (i, e) in admitted.iter_mut().enumerate() {
            e.id = format!("{d}-{:04}", i + 1);
        }
        entries.insert(d, admitted);
        stats.insert(d, st);
    }
    Ok(PromptLibrary {
        entries,
        config: *config,
        classifier_id: classifier.id(),
        stats,
    })
}

pub fn write_library(path: &Path, library: &PromptLibrary) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for e in library.iter() {
        let line = serde_json::to_string(e).map_err(|e| Error::Other(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a library JSONL file and checks entry invariants.
pub fn read_library(path: &Path) -> Result<Vec<PromptEntry>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: PromptEntry = serde_json::from_str(&line).map_err(|err| Error::Line {
            line: i + 1,
            message: err.to_string(),
        })?;
        if e.text.contains(MARKER) || e.text.trim().is_empty() {
            return Err(Error::Line {
                line: i + 1,
                message: "prompt text is empty or contains markers".into(),
            });
        }
        out.push(e);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::StubClassifier;
    use crate::labels::Label;

    fn rec(id: &str, marked: &str, dim: Option<Dimension>) -> MgsRecord {
        let (text, _) = crate::textproc::strip_markers(marked).unwrap();
        MgsRecord {
            id: id.into(),
            text,
            marked_text: marked.into(),
            label: Label::Unrelated,
            dimension: dim,
            source: "t".into(),
            split: None,
        }
    }

    fn corpus(per_dim: usize) -> Vec<MgsRecord> {
        let mut v = Vec::new();
        for d in Dimension::ALL {
            for i in 0..per_dim {
                let extra = "very ".repeat(i % 7);
                v.push(rec(
                    &format!("{d}{i:04}"),
                    &format!("Prompt {d} number {i} is {extra}===long=== indeed"),
                    Some(d),
                ));
            }
        }
        v
    }

    fn all_unrelated() -> StubClassifier {
        StubClassifier::constant("unrelated", ProbVector::one_hot(0).unwrap())
    }

    #[test]
    fn fills_quota_longest_first() {
        let lib = generate_prompts(&corpus(500), &all_unrelated(), &PromptConfig::default()).unwrap();
        for d in Dimension::ALL {
            let e = &lib.entries[&d];
            assert_eq!(e.len(), 200);
            assert!(e.windows(2).all(|w| w[0].word_count >= w[1].word_count));
            assert!(e
                .iter()
                .all(|p| validate_prompt(&all_unrelated(), &p.text).unwrap().unrelated));
        }
        let again = generate_prompts(&corpus(500), &all_unrelated(), &PromptConfig::default()).unwrap();
        assert_eq!(lib, again);
    }

    #[test]
    fn unmarked_and_dimensionless_records_are_not_candidates() {
        let mut recs = corpus(2);
        recs.push(rec("nomark", "No markers here at all", Some(Dimension::Race)));
        recs.push(rec("nodim", "Some prefix words ===x===", None));
        let lib = generate_prompts(&recs, &all_unrelated(), &PromptConfig::default()).unwrap();
        assert!(lib
            .iter()
            .all(|e| e.source_record_id != "nomark" && e.source_record_id != "nodim"));
        assert_eq!(lib.stats[&Dimension::Race].candidates, 2);
    }

    #[test]
    fn biased_filter_leaves_nothing_and_errors() {
        let stub = StubClassifier::constant("race", ProbVector::one_hot(3).unwrap());
        let err = generate_prompts(&corpus(5), &stub, &PromptConfig::default()).unwrap_err();
        assert!(err.to_string().contains("classified as biased"));
    }

    #[test]
    fn validation_tie_goes_to_unrelated_and_is_flagged() {
        let mut p = [0.0; 9];
        p[0] = 0.5;
        p[3] = 0.5;
        let stub = StubClassifier::constant("tie", ProbVector::new(p).unwrap());
        let v = validate_prompt(&stub, "some words").unwrap();
        assert!(v.unrelated && v.tied);
        assert!(
            !validate_prompt(&StubClassifier::constant("r", ProbVector::one_hot(3).unwrap()), "x")
                .unwrap()
                .unrelated
        );
    }

    #[test]
    fn short_prefixes_and_duplicates_skipped() {
        let mut recs = corpus(1);
        recs.push(rec("a1", "Too ===short===", Some(Dimension::Gender)));
        recs.push(rec("a2", "The same prefix here ===x===", Some(Dimension::Gender)));
        recs.push(rec("a3", "The same prefix here ===y===", Some(Dimension::Gender)));
        let lib = generate_prompts(&recs, &all_unrelated(), &PromptConfig::default()).unwrap();
        let st = &lib.stats[&Dimension::Gender];
        assert_eq!((st.too_short, st.duplicates, st.admitted), (1, 1, 2));
    }

    #[test]
    fn library_file_round_trip() {
        let lib = generate_prompts(&corpus(3), &all_unrelated(), &PromptConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lib.jsonl");
        write_library(&path, &lib).unwrap();
        let back = read_library(&path).unwrap();
        assert_eq!(back, lib.iter().cloned().collect::<Vec<_>>());
        let first = std::fs::read_to_string(&path).unwrap();
        assert!(first.starts_with("{\"id\":\"gender-0001\",\"dimension\":\"gender\",\"text\":"));
    }
}
