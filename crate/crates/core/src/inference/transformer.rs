//! Exported transformer classifier: BERT-style WordPiece tokenization in
//! front of an ONNX graph that maps `input_ids`/`attention_mask` to logits.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use super::{Classifier, ProbVector};
use crate::error::{Error, Result};
use crate::labels::{label_names, Dimension, NUM_LABELS};
use crate::onnx::{OnnxModel, Tensor};

/// Tokenizer description written next to an exported model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerSpec {
    /// One token per line; relative paths resolve against the spec's
    /// directory.
    pub vocab_file: PathBuf,
    pub do_lower_case: bool,
    pub cls_id: u32,
    pub sep_id: u32,
    pub pad_id: u32,
    #[serde(default = "default_max_position")]
    pub max_position: usize,
    #[serde(default)]
    pub unk_token: Option<String>,
}

fn default_max_position() -> usize {
    512
}

impl TokenizerSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut spec: TokenizerSpec =
            serde_json::from_slice(&bytes).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        if spec.vocab_file.is_relative() {
            if let Some(dir) = path.parent() {
                spec.vocab_file = dir.join(&spec.vocab_file);
            }
        }
        if spec.max_position < 3 {
            return Err(Error::Schema("max_position must leave room for [CLS] and [SEP]".into()));
        }
        Ok(spec)
    }
}

/// Lowercased letter without its accent, for precomposed Latin letters.
fn strip_accent(c: char) -> Option<char> {
    let base = match c {
        'à'..='å' => 'a',
        'ç' => 'c',
        'è'..='ë' => 'e',
        'ì'..='ï' => 'i',
        'ñ' => 'n',
        'ò'..='ö' | 'ø' => 'o',
        'ù'..='ü' => 'u',
        'ý' | 'ÿ' => 'y',
        'ā' | 'ă' | 'ą' => 'a',
        'ć' | 'ĉ' | 'ċ' | 'č' => 'c',
        'ď' => 'd',
        'ē' | 'ĕ' | 'ė' | 'ę' | 'ě' => 'e',
        'ĝ' | 'ğ' | 'ġ' | 'ģ' => 'g',
        'ĥ' => 'h',
        'ĩ' | 'ī' | 'ĭ' | 'į' => 'i',
        'ĵ' => 'j',
        'ķ' => 'k',
        'ĺ' | 'ļ' | 'ľ' => 'l',
        'ń' | 'ņ' | 'ň' => 'n',
        'ō' | 'ŏ' | 'ő' => 'o',
        'ŕ' | 'ŗ' | 'ř' => 'r',
        'ś' | 'ŝ' | 'ş' | 'š' => 's',
        'ţ' | 'ť' => 't',
        'ũ' | 'ū' | 'ŭ' | 'ů' | 'ű' | 'ų' => 'u',
        'ŵ' => 'w',
        'ŷ' => 'y',
        'ź' | 'ż' | 'ž' => 'z',
        _ => return None,
    };
    Some(base)
}

fn is_combining_mark(c: char) -> bool {
    matches!(c, '\u{0300}'..='\u{036F}')
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c, '\u{2000}'..='\u{206F}' | '\u{3000}'..='\u{303F}' | '¡' | '¿' | '«' | '»' | '§' | '¶')
}

fn is_cjk(c: char) -> bool {
    matches!(c,
        '\u{4E00}'..='\u{9FFF}' | '\u{3400}'..='\u{4DBF}' | '\u{20000}'..='\u{2A6DF}'
        | '\u{2A700}'..='\u{2B73F}' | '\u{2B740}'..='\u{2B81F}' | '\u{2B820}'..='\u{2CEAF}'
        | '\u{F900}'..='\u{FAFF}' | '\u{2F800}'..='\u{2FA1F}')
}

/// Greedy longest-match-first subword tokenizer.
#[derive(Debug, Clone)]
pub struct WordPiece {
    vocab: HashMap<String, u32>,
    unk_id: u32,
    lower: bool,
}

const MAX_WORD_CHARS: usize = 100;

impl WordPiece {
    pub fn new(tokens: impl IntoIterator<Item = String>, lower: bool, unk_token: &str) -> Result<Self> {
        let vocab: HashMap<String, u32> = tokens.into_iter().enumerate().map(|(i, t)| (t, i as u32)).collect();
        let unk_id = *vocab
            .get(unk_token)
            .ok_or_else(|| Error::Schema(format!("vocabulary lacks the unknown token {unk_token}")))?;
        Ok(WordPiece { vocab, unk_id, lower })
    }

    pub fn from_spec(spec: &TokenizerSpec) -> Result<Self> {
        let text = std::fs::read_to_string(&spec.vocab_file).map_err(|e| Error::io(&spec.vocab_file, e))?;
        let unk = spec.unk_token.as_deref().unwrap_or("[UNK]");
        WordPiece::new(
            text.lines().map(|l| l.trim_end_matches('\r').to_string()),
            spec.do_lower_case,
            unk,
        )
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Whitespace and punctuation split after cleaning, lowercasing and
    /// accent stripping.
    pub fn basic_tokens(&self, text: &str) -> Vec<String> {
        let mut cleaned = String::with_capacity(text.len());
        for c in text.chars() {
            if c == '\0' || c == '\u{FFFD}' || (c.is_control() && !c.is_whitespace()) {
                continue;
            }
            if is_cjk(c) {
                cleaned.push(' ');
                cleaned.push(c);
                cleaned.push(' ');
            } else if c.is_whitespace() {
                cleaned.push(' ');
            } else {
                cleaned.push(c);
            }
        }
        let mut out = Vec::new();
        for word in cleaned.split_whitespace() {
            let word: String = if self.lower {
                word.chars()
                    .flat_map(char::to_lowercase)
                    .filter(|&c| !is_combining_mark(c))
                    .map(|c| strip_accent(c).unwrap_or(c))
                    .collect()
            } else {
                word.to_string()
            };
            let mut cur = String::new();
            for c in word.chars() {
                if is_punctuation(c) {
                    if !cur.is_empty() {
                        out.push(std::mem::take(&mut cur));
                    }
                    out.push(c.to_string());
                } else {
                    cur.push(c);
                }
            }
            if !cur.is_empty() {
                out.push(cur);
            }
        }
        out
    }

    fn word_pieces(&self, word: &str, out: &mut Vec<u32>) {
        let chars: Vec<char> = word.chars().collect();
        if chars.len() > MAX_WORD_CHARS {
            out.push(self.unk_id);
            return;
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                let mut sub: String = chars[start..end].iter().collect();
                if start > 0 {
                    sub.insert_str(0, "##");
                }
                if let Some(&id) = self.vocab.get(&sub) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    pieces.push(id);
                    start = end;
                }
                None => {
                    out.push(self.unk_id);
                    return;
                }
            }
        }
        out.extend(pieces);
    }

    /// Subword ids without special tokens.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut ids = Vec::new();
        for w in self.basic_tokens(text) {
            self.word_pieces(&w, &mut ids);
        }
        ids
    }
}

/// How the graph's logits map onto label codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogitLayout {
    /// Nine logits in label-code order.
    Full,
    /// Three logits ordered unrelated, stereotype_d, anti-stereotype_d;
    /// every other label gets probability 0.
    Dimension(Dimension),
}

impl LogitLayout {
    fn width(self) -> usize {
        match self {
            LogitLayout::Full => NUM_LABELS,
            LogitLayout::Dimension(_) => 3,
        }
    }

    fn describe(self) -> String {
        match self {
            LogitLayout::Full => label_names()
                .iter()
                .enumerate()
                .map(|(i, n)| format!("{i}={n}"))
                .collect::<Vec<_>>()
                .join(", "),
            LogitLayout::Dimension(d) => format!("0=unrelated, 1=stereotype_{d}, 2=anti-stereotype_{d}"),
        }
    }
}

pub struct TransformerClassifier {
    id: String,
    model: OnnxModel,
    tokenizer: WordPiece,
    spec: TokenizerSpec,
    layout: LogitLayout,
    needs_token_types: bool,
    truncations: AtomicU64,
}

impl std::fmt::Debug for TransformerClassifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransformerClassifier")
            .field("id", &self.id)
            .field("layout", &self.layout)
            .finish_non_exhaustive()
    }
}

impl TransformerClassifier {
    /// Token ids with [CLS]/[SEP], truncated to `max_position`.
    pub fn input_ids(&self, sentence: &str) -> (Vec<i64>, bool) {
        let mut ids = self.tokenizer.encode(sentence);
        let room = self.spec.max_position - 2;
        let truncated = ids.len() > room;
        ids.truncate(room);
        let mut out = Vec::with_capacity(ids.len() + 2);
        out.push(i64::from(self.spec.cls_id));
        out.extend(ids.into_iter().map(i64::from));
        out.push(i64::from(self.spec.sep_id));
        (out, truncated)
    }

    fn logits(&self, ids: &[i64]) -> Result<Vec<f64>> {
        let n = ids.len();
        let shape = IxDyn(&[1, n]);
        let mut feeds = vec![
            (
                "input_ids".to_string(),
                Tensor::I64(ArrayD::from_shape_vec(shape.clone(), ids.to_vec()).expect("shape")),
            ),
            (
                "attention_mask".to_string(),
                Tensor::I64(ArrayD::from_elem(shape.clone(), 1)),
            ),
        ];
        if self.needs_token_types {
            feeds.push(("token_type_ids".to_string(), Tensor::I64(ArrayD::from_elem(shape, 0))));
        }
        let out = self.model.run(feeds)?;
        let logits = out
            .first()
            .ok_or_else(|| Error::Backend("model produced no output".into()))?;
        let l = logits.f32()?;
        Ok(l.iter().map(|&v| f64::from(v)).collect())
    }

    fn to_probs(&self, logits: &[f64]) -> Result<ProbVector> {
        match self.layout {
            LogitLayout::Full => ProbVector::from_logits(logits),
            LogitLayout::Dimension(d) => {
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
                let s: f64 = e.iter().sum();
                let mut p = [0.0; NUM_LABELS];
                p[0] = e[0] / s;
                p[d.stereotype_code()] = e[1] / s;
                p[d.anti_stereotype_code()] = e[2] / s;
                ProbVector::new(p)
            }
        }
    }
}

impl Classifier for TransformerClassifier {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn predict(&self, sentence: &str) -> Result<ProbVector> {
        let (ids, truncated) = self.input_ids(sentence);
        if truncated {
            self.truncations.fetch_add(1, Ordering::Relaxed);
        }
        let logits = self.logits(&ids)?;
        if logits.len() != self.layout.width() {
            return Err(Error::Backend(format!(
                "model returned {} logits, expected {}",
                logits.len(),
                self.layout.width()
            )));
        }
        self.to_probs(&logits)
    }

    fn truncations(&self) -> u64 {
        self.truncations.load(Ordering::Relaxed)
    }
}

/// Loads an exported 9-way classifier; any other logit count is rejected.
pub fn load_transformer(model_path: &Path, tokenizer_spec_path: &Path) -> Result<TransformerClassifier> {
    load_transformer_with_layout(model_path, tokenizer_spec_path, LogitLayout::Full)
}

pub fn load_transformer_with_layout(
    model_path: &Path,
    tokenizer_spec_path: &Path,
    layout: LogitLayout,
) -> Result<TransformerClassifier> {
    let spec = TokenizerSpec::load(tokenizer_spec_path)?;
    let tokenizer = WordPiece::from_spec(&spec)?;
    let model = OnnxModel::load(model_path)?;
    for required in ["input_ids", "attention_mask"] {
        if !model.input_names().iter().any(|n| n == required) {
            return Err(Error::Backend(format!(
                "{} has no `{required}` input (inputs: {:?})",
                model_path.display(),
                model.input_names()
            )));
        }
    }
    let needs_token_types = model.input_names().iter().any(|n| n == "token_type_ids");
    if let Some(extra) = model
        .input_names()
        .iter()
        .find(|n| !matches!(n.as_str(), "input_ids" | "attention_mask" | "token_type_ids"))
    {
        return Err(Error::Backend(format!("unsupported model input `{extra}`")));
    }
    let classifier = TransformerClassifier {
        id: model_path
            .file_stem()
            .map_or_else(|| "transformer".to_string(), |s| s.to_string_lossy().into_owned()),
        model,
        tokenizer,
        spec,
        layout,
        needs_token_types,
        truncations: AtomicU64::new(0),
    };
    let width = classifier
        .logits(&[i64::from(classifier.spec.cls_id), i64::from(classifier.spec.sep_id)])?
        .len();
    if width != layout.width() {
        return Err(Error::Backend(format!(
            "model emits {width} logits but {} are required, in the label mapping {}",
            layout.width(),
            layout.describe()
        )));
    }
    Ok(classifier)
}
