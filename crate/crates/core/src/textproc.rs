//! Tokenization, `===` marker handling and rule-based sentence segmentation.
//!
//! Everything here is a pure function of its input. The same tokenizer feeds
//! TF-IDF features and the perturbation explainers so that attributions line
//! up with model features.

use std::collections::HashSet;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Span delimiter used to mark stereotypical tokens.
pub const MARKER: &str = "===";

const DEFAULT_ABBREVIATIONS: &str = include_str!("../data/abbreviations.txt");

/// A lowercase token and its byte range in the source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub token: String,
    pub start: usize,
    pub end: usize,
}

/// Byte range of a formerly `===`-delimited region in clean text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkedSpan {
    pub start: usize,
    pub end: usize,
}

/// Splits text into maximal runs of alphanumeric characters, lowercased.
/// Punctuation, apostrophes and hyphens separate tokens.
pub fn tokenize(text: &str) -> Vec<TokenSpan> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let flush = |out: &mut Vec<TokenSpan>, s: usize, e: usize| {
        let token: String = text[s..e]
            .to_lowercase()
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect();
        if !token.is_empty() {
            out.push(TokenSpan {
                token,
                start: s,
                end: e,
            });
        }
    };
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            flush(&mut out, s, i);
        }
    }
    if let Some(s) = start {
        flush(&mut out, s, text.len());
    }
    out
}

/// Token strings only.
pub fn tokens(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.token).collect()
}

/// Number of tokens, used as the word count throughout.
pub fn word_count(text: &str) -> usize {
    tokenize(text).len()
}

/// Collapses whitespace runs to a single space and trims both ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Removes every `===` delimiter and reports where the delimited regions
/// ended up in the clean text.
pub fn strip_markers(marked: &str) -> Result<(String, Vec<MarkedSpan>)> {
    let pieces: Vec<&str> = marked.split(MARKER).collect();
    let delimiters = pieces.len() - 1;
    if !delimiters.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!(
            "odd number of `{MARKER}` delimiters ({delimiters})"
        )));
    }
    let mut clean = String::with_capacity(marked.len());
    let mut spans = Vec::with_capacity(delimiters / 2);
    for (i, piece) in pieces.iter().enumerate() {
        let start = clean.len();
        clean.push_str(piece);
        if i % 2 == 1 {
            spans.push(MarkedSpan {
                start,
                end: clean.len(),
            });
        }
    }
    Ok((clean, spans))
}

/// Inverse of [`strip_markers`]. Spans must be ordered, non-overlapping and
/// lie on char boundaries.
pub fn insert_markers(clean: &str, spans: &[MarkedSpan]) -> Result<String> {
    let mut out = String::with_capacity(clean.len() + spans.len() * 2 * MARKER.len());
    let mut cursor = 0;
    for span in spans {
        if span.start < cursor
            || span.end < span.start
            || span.end > clean.len()
            || !clean.is_char_boundary(span.start)
            || !clean.is_char_boundary(span.end)
        {
            return Err(Error::InvalidInput(format!(
                "invalid marked span {}..{} for text of length {}",
                span.start,
                span.end,
                clean.len()
            )));
        }
        out.push_str(&clean[cursor..span.start]);
        out.push_str(MARKER);
        out.push_str(&clean[span.start..span.end]);
        out.push_str(MARKER);
        cursor = span.end;
    }
    out.push_str(&clean[cursor..]);
    Ok(out)
}

/// Trimmed text before the first marker, or `None` when there is no marker
/// or nothing precedes it.
pub fn prompt_prefix(marked: &str) -> Option<String> {
    let idx = marked.find(MARKER)?;
    let prefix = marked[..idx].trim();
    if prefix.is_empty() {
        None
    } else {
        Some(prefix.to_string())
    }
}

/// Abbreviations after which a period does not end a sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Abbreviations {
    entries: HashSet<String>,
}

impl Abbreviations {
    /// Parses the plain-text list format: one lowercase abbreviation per
    /// line, `#` comments and blank lines ignored.
    pub fn parse(list: &str) -> Self {
        let entries = list
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Abbreviations { entries }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    /// The bundled list.
    pub fn builtin() -> &'static Abbreviations {
        static BUILTIN: OnceLock<Abbreviations> = OnceLock::new();
        BUILTIN.get_or_init(|| Abbreviations::parse(DEFAULT_ABBREVIATIONS))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains(word)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201D}' | '\u{2019}')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '\u{201C}' | '\u{2018}')
}

/// Segments text with the bundled abbreviation list.
pub fn segment_sentences(text: &str) -> Vec<&str> {
    segment_sentences_with(text, Abbreviations::builtin())
}

/// Splits after `.`, `!` or `?` (plus any closing quotes or brackets) when
/// followed by whitespace and an uppercase letter, or by end of text. A
/// period closing a listed abbreviation never splits.
///
/// Trailing whitespace stays attached to the preceding sentence, so the
/// pieces concatenate back to `text` exactly.
pub fn segment_sentences_with<'a>(text: &'a str, abbrevs: &Abbreviations) -> Vec<&'a str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut cuts = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if !is_terminator(c) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < chars.len() && is_terminator(chars[j].1) {
            j += 1;
        }
        let last_term = j - 1;
        while j < chars.len() && is_closer(chars[j].1) {
            j += 1;
        }
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let boundary = if k == chars.len() {
            true
        } else if k > j {
            let mut m = k;
            while m < chars.len() && is_opener(chars[m].1) {
                m += 1;
            }
            m < chars.len() && chars[m].1.is_uppercase()
        } else {
            false
        };
        let abbreviated = i == last_term && c == '.' && abbrevs.contains(&word_ending_at(text, pos + c.len_utf8()));
        if boundary && !abbreviated {
            let cut = if k == chars.len() { text.len() } else { chars[k].0 };
            cuts.push(cut);
        }
        i = j.max(i + 1);
    }
    let mut out = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    for cut in cuts {
        if cut > start {
            out.push(&text[start..cut]);
            start = cut;
        }
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out
}

/// Sentences with surrounding whitespace removed and blank pieces dropped.
pub fn sentences_trimmed(text: &str) -> Vec<&str> {
    segment_sentences(text)
        .into_iter()
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

/// Lowercased whitespace-delimited word ending at byte `end`, with leading
/// opening punctuation removed.
fn word_ending_at(text: &str, end: usize) -> String {
    let head = &text[..end];
    let start = head
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_whitespace())
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(0);
    head[start..].trim_start_matches(is_opener).to_lowercase()
}
