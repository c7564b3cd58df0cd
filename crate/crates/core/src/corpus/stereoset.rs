use serde::Deserialize;

use super::{ParseStats, RawUnit, Source, Strictness};
use crate::error::{Error, Result};
use crate::labels::{Dimension, Gold};

#[derive(Deserialize)]
struct File {
    data: Data,
}

#[derive(Deserialize)]
struct Data {
    #[serde(default)]
    intrasentence: Vec<Entry>,
    #[serde(default)]
    intersentence: Vec<Entry>,
}

#[derive(Deserialize)]
struct Entry {
    #[serde(default)]
    id: String,
    bias_type: String,
    context: String,
    sentences: Vec<Candidate>,
}

#[derive(Deserialize)]
struct Candidate {
    #[serde(default)]
    id: String,
    sentence: String,
    gold_label: String,
}

/// Parses the published StereoSet JSON layout into one unit per
/// (context, candidate) pair, intra-sentence entries first, input order
/// preserved.
pub fn parse_stereoset(raw: &[u8], strictness: Strictness) -> Result<(Vec<RawUnit>, ParseStats)> {
    let file: File = serde_json::from_slice(raw).map_err(|e| Error::JsonAt {
        offset: byte_offset(raw, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let mut stats = ParseStats::default();
    let mut units = Vec::new();
    let groups = [
        (Source::StereoSetIntra, file.data.intrasentence),
        (Source::StereoSetInter, file.data.intersentence),
    ];
    for (source, entries) in groups {
        for (n, entry) in entries.into_iter().enumerate() {
            let dimension = match entry.bias_type.parse::<Dimension>() {
                Ok(d) => d,
                Err(e) if strictness.strict => return Err(e),
                Err(_) => {
                    stats.skipped_unknown_dimension += 1;
                    continue;
                }
            };
            for (k, cand) in entry.sentences.into_iter().enumerate() {
                let gold: Gold = cand.gold_label.parse().map_err(|_| {
                    Error::Schema(format!(
                        "{source} entry {n} candidate {k}: unknown gold_label `{}`",
                        cand.gold_label
                    ))
                })?;
                let source_id = if cand.id.is_empty() {
                    format!("{}:{n}:{k}", entry.id)
                } else {
                    cand.id
                };
                units.push(RawUnit {
                    source,
                    context: entry.context.clone(),
                    candidate: cand.sentence,
                    gold,
                    dimension,
                    source_id,
                });
            }
        }
    }
    stats.units = units.len();
    Ok((units, stats))
}

/// Converts serde_json's 1-based line/column into a byte offset.
pub(crate) fn byte_offset(raw: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, l) in raw.split(|b| *b == b'\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(raw.len());
        }
        offset += l.len() + 1;
    }
    raw.len()
}
