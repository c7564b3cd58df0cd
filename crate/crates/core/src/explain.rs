//! Token-level attributions by deletion perturbation: a LIME-style local
//! surrogate, permutation Shapley values, and agreement between the two.
//!
//! Tokens are the same alphanumeric runs the TF-IDF features use. A masked
//! sentence is the kept tokens' surface text joined by single spaces.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::Classifier;
use crate::labels::{Label, NUM_LABELS};
use crate::textproc::{tokenize, TokenSpan};

/// Text classified when every token is removed.
pub const EMPTY_SENTINEL: &str = "...";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lime,
    Shapley,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub method: Method,
    pub target: usize,
    pub target_name: String,
    pub tokens: Vec<TokenSpan>,
    pub weights: Vec<f64>,
    /// Model output with every token removed (Shapley only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_value: Option<f64>,
    /// Model output on the full sentence.
    pub full_value: f64,
}

/// Surface strings of the sentence's tokens, in order.
pub fn explain_tokens(sentence: &str) -> (Vec<TokenSpan>, Vec<String>) {
    let spans = tokenize(sentence);
    let surface = spans.iter().map(|t| sentence[t.start..t.end].to_string()).collect();
    (spans, surface)
}

/// The sentence rebuilt from kept tokens.
pub fn masked_sentence(tokens: &[String], mask: &[bool]) -> Result<String> {
    if tokens.len() != mask.len() {
        return Err(Error::DimensionMismatch {
            expected: tokens.len(),
            got: mask.len(),
        });
    }
    let kept: Vec<&str> = tokens
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(t, _)| t.as_str())
        .collect();
    Ok(if kept.is_empty() {
        EMPTY_SENTINEL.to_string()
    } else {
        kept.join(" ")
    })
}

/// Probability of `target` for the sentence rebuilt from kept tokens.
pub fn masked_predict<C: Classifier + ?Sized>(
    classifier: &C,
    tokens: &[String],
    mask: &[bool],
    target: usize,
) -> Result<f64> {
    check_target(target)?;
    let s = masked_sentence(tokens, mask)?;
    Ok(classifier.classify(&s)?.get(target))
}

fn check_target(target: usize) -> Result<()> {
    if target >= NUM_LABELS {
        return Err(Error::UnknownLabelCode(target as i64));
    }
    Ok(())
}

/// Evaluates each distinct mask once, on up to `threads` threads.
fn evaluate_masks<C: Classifier + ?Sized>(
    classifier: &C,
    tokens: &[String],
    masks: &[Vec<bool>],
    target: usize,
) -> Result<HashMap<Vec<bool>, f64>> {
    let mut unique: Vec<&Vec<bool>> = masks.iter().collect();
    unique.sort();
    unique.dedup();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(8);
    let chunk = unique.len().div_ceil(threads).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = unique
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|m| Ok(((*m).clone(), masked_predict(classifier, tokens, m, target)?)))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        let mut out = HashMap::with_capacity(unique.len());
        for h in handles {
            out.extend(h.join().expect("mask worker panicked")?);
        }
        Ok(out)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimeConfig {
    /// Total masks, including the all-kept mask.
    pub n_samples: usize,
    pub kernel_width: f64,
    pub seed: u64,
    pub ridge_lambda: f64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            n_samples: 1000,
            kernel_width: 0.75,
            seed: 42,
            ridge_lambda: 1e-3,
        }
    }
}

/// Locality weight of a mask: cosine similarity to the all-kept mask is
/// sqrt(kept / n).
fn lime_weight(mask: &[bool], kernel_width: f64) -> f64 {
    let kept = mask.iter().filter(|&&m| m).count() as f64;
    let cos = (kept / mask.len() as f64).sqrt();
    (-(1.0 - cos).powi(2) / (kernel_width * kernel_width)).exp()
}

pub fn lime_explain<C: Classifier + ?Sized>(
    classifier: &C,
    sentence: &str,
    target: usize,
    config: &LimeConfig,
) -> Result<Attribution> {
    check_target(target)?;
    let (spans, tokens) = explain_tokens(sentence);
    let n = tokens.len();
    if n == 0 {
        return Err(Error::InvalidInput("sentence has no tokens to explain".into()));
    }
    if config.n_samples < 2 || !(config.kernel_width > 0.0) || !(config.ridge_lambda >= 0.0) {
        return Err(Error::InvalidInput(
            "LIME needs n_samples >= 2, kernel_width > 0 and ridge_lambda >= 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut masks = Vec::with_capacity(config.n_samples);
    masks.push(vec![true; n]);
    for _ in 1..config.n_samples {
        masks.push((0..n).map(|_| rng.random_bool(0.5)).collect::<Vec<bool>>());
    }
    if masks.iter().all(|m| m == &masks[0]) {
        return Err(Error::Numerical("degenerate LIME design: all masks identical".into()));
    }
    let values = evaluate_masks(classifier, &tokens, &masks, target)?;

    // Weighted ridge with an unpenalized intercept in column 0.
    let p = n + 1;
    let mut xtwx = DMatrix::<f64>::zeros(p, p);
    let mut xtwy = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    for m in &masks {
        let w = lime_weight(m, config.kernel_width);
        let y = values[m];
        row[0] = 1.0;
        for (j, &b) in m.iter().enumerate() {
            row[j + 1] = if b { 1.0 } else { 0.0 };
        }
        for a in 0..p {
            if row[a] == 0.0 {
                continue;
            }
            xtwy[a] += w * row[a] * y;
            for b in 0..p {
                xtwx[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    for j in 1..p {
        xtwx[(j, j)] += config.ridge_lambda;
    }
    let beta = xtwx
        .lu()
        .solve(&xtwy)
        .ok_or_else(|| Error::Numerical("singular LIME design matrix".into()))?;
    let weights: Vec<f64> = beta.iter().skip(1).copied().collect();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numerical("non-finite LIME coefficient".into()));
    }
    Ok(Attribution {
        method: Method::Lime,
        target,
        target_name: Label::from_code(target)?.name(),
        tokens: spans,
        weights,
        base_value: None,
        full_value: values[&masks[0]],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapleyMode {
    /// Exhaustive up to `exhaustive_max_tokens`, sampled above.
    Auto,
    Exhaustive,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapleyConfig {
    pub n_permutations: usize,
    pub seed: u64,
    pub mode: ShapleyMode,
    pub exhaustive_max_tokens: usize,
}

impl Default for ShapleyConfig {
    fn default() -> Self {
        ShapleyConfig {
            n_permutations: 200,
            seed: 42,
            mode: ShapleyMode::Auto,
            exhaustive_max_tokens: 12,
        }
    }
}

/// Exhaustive mode refuses more tokens than this (2^n model calls).
const EXHAUSTIVE_HARD_LIMIT: usize = 20;

pub fn shapley_explain<C: Classifier + ?Sized>(
    classifier: &C,
    sentence: &str,
    target: usize,
    config: &ShapleyConfig,
) -> Result<Attribution> {
    check_target(target)?;
    let (spans, tokens) = explain_tokens(sentence);
    let n = tokens.len();
    if n == 0 {
        return Err(Error::InvalidInput("sentence has no tokens to explain".into()));
    }
    let exhaustive = match config.mode {
        ShapleyMode::Exhaustive => true,
        ShapleyMode::Sampled => false,
        ShapleyMode::Auto => n <= config.exhaustive_max_tokens,
    };
    let (weights, base, full) = if exhaustive {
        if n > EXHAUSTIVE_HARD_LIMIT {
            return Err(Error::InvalidInput(format!(
                "exhaustive Shapley limited to {EXHAUSTIVE_HARD_LIMIT} tokens, got {n}"
            )));
        }
        exact_shapley(classifier, &tokens, target)?
    } else {
        sampled_shapley(classifier, &tokens, target, config)?
    };
    Ok(Attribution {
        method: Method::Shapley,
        target,
        target_name: Label::from_code(target)?.name(),
        tokens: spans,
        weights,
        base_value: Some(base),
        full_value: full,
    })
}

fn bits(subset: usize, n: usize) -> Vec<bool> {
    (0..n).map(|i| subset >> i & 1 == 1).collect()
}

/// Coalition-weighted sum over all 2^n subsets.
fn exact_shapley<C: Classifier + ?Sized>(
    classifier: &C,
    tokens: &[String],
    target: usize,
) -> Result<(Vec<f64>, f64, f64)> {
    let n = tokens.len();
    let masks: Vec<Vec<bool>> = (0..1usize << n).map(|s| bits(s, n)).collect();
    let values = evaluate_masks(classifier, tokens, &masks, target)?;
    let v: Vec<f64> = masks.iter().map(|m| values[m]).collect();
    // |S|! (n-|S|-1)! / n!
    let mut coef = vec![0.0; n];
    for (s, c) in coef.iter_mut().enumerate() {
        let mut x = 1.0 / n as f64;
        // 1 / (n * C(n-1, s))
        for j in 0..s {
            x *= (j + 1) as f64 / (n - 1 - j) as f64;
        }
        *c = x;
    }
    let mut phi = vec![0.0; n];
    for s in 0..1usize << n {
        let size = s.count_ones() as usize;
        for (i, p) in phi.iter_mut().enumerate() {
            if s >> i & 1 == 0 {
                *p += coef[size] * (v[s | 1 << i] - v[s]);
            }
        }
    }
    Ok((phi, v[0], v[(1usize << n) - 1]))
}

fn sampled_shapley<C: Classifier + ?Sized>(
    classifier: &C,
    tokens: &[String],
    target: usize,
    config: &ShapleyConfig,
) -> Result<(Vec<f64>, f64, f64)> {
    let n = tokens.len();
    if config.n_permutations == 0 {
        return Err(Error::InvalidInput("n_permutations must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let perms: Vec<Vec<usize>> = (0..config.n_permutations)
        .map(|_| {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    let mut masks = vec![vec![false; n], vec![true; n]];
    for p in &perms {
        let mut m = vec![false; n];
        for &i in p {
            m[i] = true;
            masks.push(m.clone());
        }
    }
    let values = evaluate_masks(classifier, tokens, &masks, target)?;
    let mut phi = vec![0.0; n];
    for p in &perms {
        let mut m = vec![false; n];
        let mut prev = values[&m];
        for &i in p {
            m[i] = true;
            let cur = values[&m];
            phi[i] += cur - prev;
            prev = cur;
        }
    }
    for x in &mut phi {
        *x /= perms.len() as f64;
    }
    Ok((phi, values[&vec![false; n]], values[&vec![true; n]]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub spearman_abs: f64,
    pub k: usize,
    pub top_k_overlap: f64,
    pub sign_agreement: f64,
}

/// Token indices by |weight| descending, ties by index.
fn ranking(w: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..w.len()).collect();
    idx.sort_by(|&a, &b| w[b].abs().total_cmp(&w[a].abs()).then(a.cmp(&b)));
    idx
}

pub fn agreement(a: &Attribution, b: &Attribution, k: usize) -> Result<AgreementReport> {
    let n = a.weights.len();
    if b.weights.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.weights.len(),
        });
    }
    if n == 0 || k == 0 {
        return Err(Error::InvalidInput("agreement needs tokens and k >= 1".into()));
    }
    let (ra, rb) = (ranking(&a.weights), ranking(&b.weights));
    let mut rank_a = vec![0usize; n];
    let mut rank_b = vec![0usize; n];
    for (r, &i) in ra.iter().enumerate() {
        rank_a[i] = r;
    }
    for (r, &i) in rb.iter().enumerate() {
        rank_b[i] = r;
    }
    let spearman = if n == 1 {
        1.0
    } else {
        let d2: f64 = (0..n).map(|i| (rank_a[i] as f64 - rank_b[i] as f64).powi(2)).sum();
        let nf = n as f64;
        1.0 - 6.0 * d2 / (nf * (nf * nf - 1.0))
    };
    let k = k.min(n);
    let top_a = &ra[..k];
    let top_b = &rb[..k];
    let overlap = top_a.iter().filter(|i| top_b.contains(i)).count() as f64 / k as f64;
    let mut union: Vec<usize> = top_a.iter().chain(top_b).copied().collect();
    union.sort_unstable();
    union.dedup();
    let agree = union
        .iter()
        .filter(|&&i| a.weights[i].signum() == b.weights[i].signum())
        .count();
    Ok(AgreementReport {
        spearman_abs: spearman,
        k,
        top_k_overlap: overlap,
        sign_agreement: agree as f64 / union.len() as f64,
    })
}

/// One line per token: surface text and weight, columns aligned.
pub fn render_attribution(sentence: &str, a: &Attribution) -> String {
    let width = a
        .tokens
        .iter()
        .map(|t| sentence.get(t.start..t.end).map_or(t.token.len(), str::len))
        .max()
        .unwrap_or(0)
        .max(5);
    let mut out = String::new();
    let method = match a.method {
        Method::Lime => "lime",
        Method::Shapley => "shapley",
    };
    let _ = writeln!(
        out,
        "{method} attribution for {} (p = {:.4})",
        a.target_name, a.full_value
    );
    if let Some(b) = a.base_value {
        let _ = writeln!(out, "base value {b:.4}");
    }
    for (t, w) in a.tokens.iter().zip(&a.weights) {
        let surface = sentence.get(t.start..t.end).unwrap_or(&t.token);
        let _ = writeln!(out, "{surface:<width$}  {w:+.4}");
    }
    out
}
