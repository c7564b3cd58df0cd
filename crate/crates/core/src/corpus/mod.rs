//! Corpus reconstruction: raw-source parsers, the record builder, the
//! stratified split and JSONL persistence.

mod build;
mod crowspairs;
mod jsonl;
mod split;
mod stereoset;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{Dimension, Gold, Label};

pub use build::{build_mgs, BuildOutput, BuildReport};
pub use crowspairs::{map_crowspairs_category, parse_crowspairs};
pub use jsonl::{corpus_digest, load_mgs, read_mgs, write_mgs, write_mgs_to};
pub use split::{assign_split, stratified_split};
pub use stereoset::parse_stereoset;

/// Placeholder token in intra-sentence contexts.
pub const BLANK: &str = "BLANK";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    StereoSetIntra,
    StereoSetInter,
    CrowsPairs,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::StereoSetIntra => "stereoset-intra",
            Source::StereoSetInter => "stereoset-inter",
            Source::CrowsPairs => "crowspairs",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stereoset-intra" => Ok(Source::StereoSetIntra),
            "stereoset-inter" => Ok(Source::StereoSetInter),
            "crowspairs" => Ok(Source::CrowsPairs),
            other => Err(Error::InvalidInput(format!("unknown source `{other}`"))),
        }
    }
}

/// One (context, candidate) pair from a raw source.
///
/// For CrowS-Pairs the context is the other member of the pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawUnit {
    pub source: Source,
    pub context: String,
    pub candidate: String,
    pub gold: Gold,
    pub dimension: Dimension,
    pub source_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One labeled corpus instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MgsRecord {
    pub id: String,
    /// Marker-free, whitespace-normalized text.
    pub text: String,
    /// `text` with `===` around the marked span (equal to `text` when no
    /// span could be aligned).
    pub marked_text: String,
    pub label: Label,
    /// Always the source context's dimension, including for unrelated
    /// records. `None` only for unrelated records loaded without one.
    pub dimension: Option<Dimension>,
    pub source: String,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            seed: 42,
        }
    }
}

/// Whether recoverable input problems abort parsing or are skipped and
/// counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Strictness {
    pub strict: bool,
}

/// Skip and drop counters from a raw-source parser.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParseStats {
    /// Units emitted.
    pub units: usize,
    /// StereoSet entries whose bias_type is not one of the four dimensions.
    pub skipped_unknown_dimension: usize,
    /// CrowS-Pairs rows in categories outside the four dimensions.
    pub dropped_unmapped_category: usize,
    /// Rows that could not be parsed, with their 1-based row number.
    pub skipped_rows: Vec<(usize, String)>,
}

/// Everything `build_corpus` produces besides the records.
#[derive(Debug, Clone)]
pub struct BuiltCorpus {
    pub records: Vec<MgsRecord>,
    pub stereoset: ParseStats,
    pub crowspairs: ParseStats,
    pub report: BuildReport,
}

/// Parses both raw sources, builds the records and assigns the split.
pub fn build_corpus(
    stereoset: &[u8],
    crowspairs: &[u8],
    strictness: Strictness,
    split: SplitSpec,
) -> Result<BuiltCorpus> {
    let (mut units, ss) = parse_stereoset(stereoset, strictness)?;
    let (cp_units, cp) = parse_crowspairs(crowspairs, strictness)?;
    units.extend(cp_units);
    let built = build_mgs(&units, strictness)?;
    Ok(BuiltCorpus {
        records: assign_split(&built.records, split)?,
        stereoset: ss,
        crowspairs: cp,
        report: built.report,
    })
}
