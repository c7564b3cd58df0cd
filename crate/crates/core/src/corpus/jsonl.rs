use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{MgsRecord, Split};
use crate::error::{Error, Result};
use crate::labels::{Dimension, Label};

#[derive(Serialize, Deserialize)]
struct Line {
    id: String,
    text: String,
    marked_text: String,
    label: i64,
    label_name: String,
    dimension: Option<String>,
    source: String,
    split: Option<Split>,
}

impl From<&MgsRecord> for Line {
    fn from(r: &MgsRecord) -> Self {
        Line {
            id: r.id.clone(),
            text: r.text.clone(),
            marked_text: r.marked_text.clone(),
            label: r.label.code() as i64,
            label_name: r.label.name(),
            dimension: r.dimension.map(|d| d.as_str().to_string()),
            source: r.source.clone(),
            split: r.split,
        }
    }
}

impl TryFrom<Line> for MgsRecord {
    type Error = Error;

    fn try_from(l: Line) -> Result<Self> {
        if !(0..9).contains(&l.label) {
            return Err(Error::UnknownLabelCode(l.label));
        }
        let label = Label::from_code(l.label as usize)?;
        if l.label_name != label.name() {
            return Err(Error::Schema(format!(
                "label_name `{}` does not match label code {}",
                l.label_name, l.label
            )));
        }
        let dimension = l.dimension.as_deref().map(str::parse::<Dimension>).transpose()?;
        if let Some(d) = label.dimension() {
            if dimension != Some(d) {
                return Err(Error::Schema(format!("label {} requires dimension {d}", label.name())));
            }
        }
        Ok(MgsRecord {
            id: l.id,
            text: l.text,
            marked_text: l.marked_text,
            label,
            dimension,
            source: l.source,
            split: l.split,
        })
    }
}

/// Writes records as JSONL, one object per line.
pub fn write_mgs_to<W: Write>(records: &[MgsRecord], mut w: W) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(&Line::from(r)).map_err(|e| Error::Other(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io("<writer>", e))?;
    }
    w.flush().map_err(|e| Error::io("<writer>", e))
}

pub fn write_mgs(path: &Path, records: &[MgsRecord]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_mgs_to(records, BufWriter::new(f)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Reads JSONL records; blank lines are ignored.
pub fn read_mgs<R: BufRead>(reader: R) -> Result<Vec<MgsRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Line {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| Error::Line {
            line: line_no,
            message: e.to_string(),
        })?;
        let record = MgsRecord::try_from(parsed).map_err(|e| Error::Line {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn load_mgs(path: &Path) -> Result<Vec<MgsRecord>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_mgs(BufReader::new(f))
}

/// SHA-256 over the JSONL serialization, used to tie reports to a corpus.
pub fn corpus_digest(records: &[MgsRecord]) -> String {
    let mut buf = Vec::new();
    write_mgs_to(records, &mut buf).expect("writing to memory cannot fail");
    hex::encode(Sha256::digest(&buf))
}
