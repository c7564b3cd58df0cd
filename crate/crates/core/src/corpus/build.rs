use std::collections::BTreeMap;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{MgsRecord, RawUnit, Source, Strictness, BLANK};
use crate::error::{Error, Result};
use crate::labels::Label;
use crate::textproc::{insert_markers, normalize_whitespace, tokenize, MarkedSpan, MARKER};

/// Counters from one corpus build.
///
/// `units_in == records_out + dropped_invalid.values().sum()` always holds.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BuildReport {
    pub units_in: usize,
    pub records_out: usize,
    /// Dropped units keyed by reason.
    pub dropped_invalid: BTreeMap<String, usize>,
    /// Records emitted without a marked span because no differing token
    /// span could be aligned.
    pub marker_fallbacks: usize,
    pub records_per_label: BTreeMap<String, usize>,
}

impl BuildReport {
    pub fn dropped_total(&self) -> usize {
        self.dropped_invalid.values().sum()
    }
}

#[derive(Debug, Clone)]
pub struct BuildOutput {
    pub records: Vec<MgsRecord>,
    pub report: BuildReport,
}

/// Turns raw units into labeled, marker-annotated records.
///
/// * intra-sentence: the candidate alone, the span that differs from the
///   BLANK context marked;
/// * inter-sentence: `context + " " + candidate`, the whole candidate marked;
/// * CrowS-Pairs: the pair member alone, the span that differs from its
///   counterpart marked.
///
/// Invalid units are dropped and counted, or abort the build when strict.
pub fn build_mgs(units: &[RawUnit], strictness: Strictness) -> Result<BuildOutput> {
    let mut report = BuildReport {
        units_in: units.len(),
        ..BuildReport::default()
    };
    let mut records = Vec::with_capacity(units.len());
    for (i, unit) in units.iter().enumerate() {
        if let Err(reason) = validate(unit) {
            if strictness.strict {
                return Err(Error::InvalidInput(format!("unit {i} ({}): {reason}", unit.source_id)));
            }
            *report.dropped_invalid.entry(reason.to_string()).or_default() += 1;
            continue;
        }
        let (text, marked) = match unit.source {
            Source::StereoSetInter => {
                let ctx = normalize_whitespace(&unit.context);
                let cand = normalize_whitespace(&unit.candidate);
                if ctx.is_empty() {
                    (cand.clone(), format!("{MARKER}{cand}{MARKER}"))
                } else {
                    (format!("{ctx} {cand}"), format!("{ctx} {MARKER}{cand}{MARKER}"))
                }
            }
            Source::StereoSetIntra | Source::CrowsPairs => {
                let text = normalize_whitespace(&unit.candidate);
                let reference = normalize_whitespace(&unit.context);
                match differing_span(&text, &reference) {
                    Some(span) => {
                        let marked = insert_markers(&text, &[span])?;
                        (text, marked)
                    }
                    None => {
                        report.marker_fallbacks += 1;
                        (text.clone(), text)
                    }
                }
            }
        };
        let label = Label::compose(unit.gold, unit.dimension);
        *report.records_per_label.entry(label.name()).or_default() += 1;
        records.push(MgsRecord {
            id: record_id(unit, &text, label),
            text,
            marked_text: marked,
            label,
            dimension: Some(unit.dimension),
            source: unit.source.as_str().to_string(),
            split: None,
        });
    }
    report.records_out = records.len();
    Ok(BuildOutput { records, report })
}

fn validate(unit: &RawUnit) -> std::result::Result<(), &'static str> {
    if unit.candidate.trim().is_empty() {
        return Err("empty candidate");
    }
    if unit.candidate.contains(MARKER) || unit.context.contains(MARKER) {
        return Err("text contains marker delimiter");
    }
    if unit.source == Source::StereoSetIntra && unit.context.matches(BLANK).count() != 1 {
        return Err("intra-sentence context without exactly one BLANK");
    }
    Ok(())
}

/// Minimal token span of `text` that differs from `reference`, by longest
/// common token prefix then longest non-overlapping common suffix.
pub(crate) fn differing_span(text: &str, reference: &str) -> Option<MarkedSpan> {
    let a = tokenize(text);
    let b = tokenize(reference);
    let prefix = a.iter().zip(&b).take_while(|(x, y)| x.token == y.token).count();
    let max_suffix = a.len().min(b.len()) - prefix;
    let suffix = a
        .iter()
        .rev()
        .zip(b.iter().rev())
        .take(max_suffix)
        .take_while(|(x, y)| x.token == y.token)
        .count();
    let end = a.len() - suffix;
    if prefix >= end {
        return None;
    }
    Some(MarkedSpan {
        start: a[prefix].start,
        end: a[end - 1].end,
    })
}

fn record_id(unit: &RawUnit, text: &str, label: Label) -> String {
    let mut h = Sha256::new();
    for part in [unit.source.as_str(), &unit.source_id, text, &label.code().to_string()] {
        h.update(part.as_bytes());
        h.update([0x1f]);
    }
    hex::encode(&h.finalize()[..16])
}
