//! Char/word n-gram tf-idf features.
//!
//! A [`FeatureSpace`] keeps the top-scoring word and char n-grams of a
//! training corpus together with their smoothed idf weights. Documents are
//! turned into L2-normalized sparse [`FeatureVector`]s against it.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Corpus, Document};
use crate::par;

pub const FEATURE_SPACE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("cannot fit a feature space on an empty corpus")]
    EmptyCorpus,
    #[error("n-gram range {min}..={max} must lie within 2..=4")]
    InvalidRange { min: u8, max: u8 },
    #[error("unsupported feature space version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed feature space: {0}")]
    Malformed(String),
}

/// Byte spans of word tokens: maximal runs of Unicode letters/digits.
pub fn word_spans(text: &str) -> impl Iterator<Item = (usize, usize)> + '_ {
    let mut chars = text.char_indices().peekable();
    std::iter::from_fn(move || {
        let start = loop {
            let (i, c) = chars.next()?;
            if c.is_alphanumeric() {
                break i;
            }
        };
        let mut end = text.len();
        while let Some(&(i, c)) = chars.peek() {
            if !c.is_alphanumeric() {
                end = i;
                break;
            }
            chars.next();
        }
        Some((start, end))
    })
}

/// Lowercased letter/digit runs; punctuation and whitespace are dropped.
pub fn tokenize_words(text: &str) -> Vec<String> {
    word_spans(text)
        .map(|(s, e)| text[s..e].to_lowercase())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NGramKind {
    Word,
    Char,
}

/// One n-gram. Word grams join their tokens with a single space (tokens
/// never contain whitespace, so the encoding is unambiguous).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NGramKey {
    pub kind: NGramKind,
    pub n: u8,
    pub gram: String,
}

impl NGramKey {
    pub fn word(tokens: &[&str]) -> Self {
        Self {
            kind: NGramKind::Word,
            n: tokens.len() as u8,
            gram: tokens.join(" "),
        }
    }

    pub fn char(gram: &str) -> Self {
        Self {
            kind: NGramKind::Char,
            n: gram.chars().count() as u8,
            gram: gram.to_string(),
        }
    }
}

impl Ord for NGramKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.kind
            .cmp(&other.kind)
            .then_with(|| self.gram.cmp(&other.gram))
            .then_with(|| self.n.cmp(&other.n))
    }
}

impl PartialOrd for NGramKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for NGramKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            NGramKind::Word => "w",
            NGramKind::Char => "c",
        };
        write!(f, "{kind}{}:{:?}", self.n, self.gram)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NGramRange {
    pub min: u8,
    pub max: u8,
}

impl NGramRange {
    pub fn new(min: u8, max: u8) -> Result<Self, FeatureError> {
        if 2 <= min && min <= max && max <= 4 {
            Ok(Self { min, max })
        } else {
            Err(FeatureError::InvalidRange { min, max })
        }
    }

    fn sizes(self) -> std::ops::RangeInclusive<usize> {
        self.min as usize..=self.max as usize
    }
}

impl Default for NGramRange {
    fn default() -> Self {
        Self { min: 2, max: 4 }
    }
}

/// Multiset of n-grams of one kind, as gram -> count.
pub fn extract_ngrams(text: &str, kind: NGramKind, range: NGramRange) -> HashMap<NGramKey, u32> {
    let mut out = HashMap::new();
    match kind {
        NGramKind::Word => {
            let tokens = tokenize_words(text);
            let refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
            for n in range.sizes() {
                for w in refs.windows(n) {
                    *out.entry(NGramKey::word(w)).or_insert(0) += 1;
                }
            }
        }
        NGramKind::Char => {
            let chars: Vec<char> = text.to_lowercase().chars().collect();
            for n in range.sizes() {
                for w in chars.windows(n) {
                    let key = NGramKey {
                        kind: NGramKind::Char,
                        n: n as u8,
                        gram: w.iter().collect(),
                    };
                    *out.entry(key).or_insert(0) += 1;
                }
            }
        }
    }
    out
}

/// How per-document tf-idf values are aggregated into a selection score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionAggregation {
    #[default]
    Max,
    Sum,
    /// Mean over the documents containing the gram.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub word_k: usize,
    pub char_k: usize,
    pub n_range: NGramRange,
    #[serde(default)]
    pub aggregation: SelectionAggregation,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            word_k: 5000,
            char_k: 10000,
            n_range: NGramRange::default(),
            aggregation: SelectionAggregation::Max,
        }
    }
}

/// Smoothed idf: ln((1 + N) / (1 + df)) + 1.
pub fn smoothed_idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

/// Relative-frequency tf of every gram of one kind in one document.
fn relative_tf(counts: HashMap<NGramKey, u32>) -> Vec<(NGramKey, f64)> {
    let total: u32 = counts.values().sum();
    let total = total as f64;
    counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / total))
        .collect()
}

#[derive(Default)]
struct GramStats {
    df: usize,
    tf_max: f64,
    tf_sum: f64,
}

/// Fitted vocabulary: word features first, then char features.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "FeatureSpaceFile", into = "FeatureSpaceFile")]
pub struct FeatureSpace {
    n_range: NGramRange,
    word_features: Vec<NGramKey>,
    char_features: Vec<NGramKey>,
    idf: Vec<f64>,
    fitted_on: String,
    fingerprint: String,
    index: HashMap<NGramKey, usize>,
}

impl PartialEq for FeatureSpace {
    fn eq(&self, other: &Self) -> bool {
        self.n_range == other.n_range
            && self.word_features == other.word_features
            && self.char_features == other.char_features
            && self.idf.iter().map(|v| v.to_bits()).eq(other.idf.iter().map(|v| v.to_bits()))
            && self.fitted_on == other.fitted_on
    }
}

impl FeatureSpace {
    fn assemble(
        n_range: NGramRange,
        word_features: Vec<NGramKey>,
        char_features: Vec<NGramKey>,
        idf: Vec<f64>,
        fitted_on: String,
    ) -> Self {
        let index = word_features
            .iter()
            .chain(&char_features)
            .cloned()
            .enumerate()
            .map(|(i, k)| (k, i))
            .collect();
        let mut h = Sha256::new();
        h.update(fitted_on.as_bytes());
        h.update([n_range.min, n_range.max]);
        for (k, v) in word_features.iter().chain(&char_features).zip(&idf) {
            h.update([k.kind as u8, k.n]);
            h.update(k.gram.as_bytes());
            h.update([0]);
            h.update(v.to_le_bytes());
        }
        let fingerprint = hex::encode(h.finalize());
        Self {
            n_range,
            word_features,
            char_features,
            idf,
            fitted_on,
            fingerprint,
            index,
        }
    }

    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    pub fn word_features(&self) -> &[NGramKey] {
        &self.word_features
    }

    pub fn char_features(&self) -> &[NGramKey] {
        &self.char_features
    }

    pub fn n_range(&self) -> NGramRange {
        self.n_range
    }

    /// Fingerprint of the training corpus this space was fitted on.
    pub fn fitted_on(&self) -> &str {
        &self.fitted_on
    }

    /// Content hash of the space itself; model artifacts pin it.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn feature(&self, i: usize) -> Option<&NGramKey> {
        let w = self.word_features.len();
        if i < w {
            self.word_features.get(i)
        } else {
            self.char_features.get(i - w)
        }
    }

    pub fn index_of(&self, key: &NGramKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn idf(&self, i: usize) -> f64 {
        self.idf[i]
    }

    pub fn idf_of(&self, key: &NGramKey) -> Option<f64> {
        self.index_of(key).map(|i| self.idf[i])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("feature space serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, FeatureError> {
        serde_json::from_str(s).map_err(|e| FeatureError::Malformed(e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
struct FeatureEntry {
    kind: NGramKind,
    n: u8,
    gram: String,
    idf: f64,
}

#[derive(Serialize, Deserialize)]
struct FeatureSpaceFile {
    format_version: u32,
    n_range: NGramRange,
    fitted_on: String,
    word_features: usize,
    features: Vec<FeatureEntry>,
}

impl From<FeatureSpace> for FeatureSpaceFile {
    fn from(s: FeatureSpace) -> Self {
        let word_features = s.word_features.len();
        let features = s
            .word_features
            .into_iter()
            .chain(s.char_features)
            .zip(s.idf)
            .map(|(k, idf)| FeatureEntry {
                kind: k.kind,
                n: k.n,
                gram: k.gram,
                idf,
            })
            .collect();
        Self {
            format_version: FEATURE_SPACE_VERSION,
            n_range: s.n_range,
            fitted_on: s.fitted_on,
            word_features,
            features,
        }
    }
}

impl TryFrom<FeatureSpaceFile> for FeatureSpace {
    type Error = FeatureError;

    fn try_from(f: FeatureSpaceFile) -> Result<Self, Self::Error> {
        if f.format_version != FEATURE_SPACE_VERSION {
            return Err(FeatureError::UnsupportedVersion(f.format_version));
        }
        if f.word_features > f.features.len() {
            return Err(FeatureError::Malformed("word feature count exceeds total".into()));
        }
        let mut keys = Vec::with_capacity(f.features.len());
        let mut idf = Vec::with_capacity(f.features.len());
        for (i, e) in f.features.into_iter().enumerate() {
            let want = if i < f.word_features { NGramKind::Word } else { NGramKind::Char };
            if e.kind != want || !(e.idf > 0.0 && e.idf.is_finite()) {
                return Err(FeatureError::Malformed(format!("bad entry {i}")));
            }
            keys.push(NGramKey { kind: e.kind, n: e.n, gram: e.gram });
            idf.push(e.idf);
        }
        let char_features = keys.split_off(f.word_features);
        let space = FeatureSpace::assemble(f.n_range, keys, char_features, idf, f.fitted_on);
        if space.index.len() != space.dim() {
            return Err(FeatureError::Malformed("duplicate features".into()));
        }
        Ok(space)
    }
}

/// Fits idf weights on `corpus` and keeps the `word_k` / `char_k` grams with
/// the highest aggregated tf-idf score. Ties break on the gram ordering.
pub fn fit_feature_space(corpus: &Corpus, cfg: &FeatureConfig) -> Result<FeatureSpace, FeatureError> {
    if corpus.is_empty() {
        return Err(FeatureError::EmptyCorpus);
    }
    let range = NGramRange::new(cfg.n_range.min, cfg.n_range.max)?;
    let per_doc: Vec<[Vec<(NGramKey, f64)>; 2]> = par::map(corpus.documents(), |d| {
        [
            relative_tf(extract_ngrams(&d.text, NGramKind::Word, range)),
            relative_tf(extract_ngrams(&d.text, NGramKind::Char, range)),
        ]
    });

    let n_docs = corpus.len();
    let mut selected = [Vec::new(), Vec::new()];
    for (slot, k) in [(0usize, cfg.word_k), (1, cfg.char_k)] {
        let mut stats: HashMap<&NGramKey, GramStats> = HashMap::new();
        for doc in &per_doc {
            for (key, tf) in &doc[slot] {
                let s = stats.entry(key).or_default();
                s.df += 1;
                s.tf_sum += tf;
                s.tf_max = s.tf_max.max(*tf);
            }
        }
        let mut scored: Vec<(f64, f64, &NGramKey)> = stats
            .into_iter()
            .map(|(key, s)| {
                let idf = smoothed_idf(n_docs, s.df);
                let agg = match cfg.aggregation {
                    SelectionAggregation::Max => s.tf_max,
                    SelectionAggregation::Sum => s.tf_sum,
                    SelectionAggregation::Mean => s.tf_sum / s.df as f64,
                };
                (agg * idf, idf, key)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.2.cmp(b.2)));
        scored.truncate(k);
        selected[slot] = scored
            .into_iter()
            .map(|(_, idf, key)| (key.clone(), idf))
            .collect::<Vec<_>>();
    }

    let [words, chars] = selected;
    let idf = words.iter().chain(&chars).map(|(_, v)| *v).collect();
    Ok(FeatureSpace::assemble(
        range,
        words.into_iter().map(|(k, _)| k).collect(),
        chars.into_iter().map(|(k, _)| k).collect(),
        idf,
        corpus.fingerprint(),
    ))
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    dim: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from (index, value) pairs in any order. Zero values are dropped;
    /// duplicate or out-of-range indices are rejected.
    pub fn from_pairs(dim: usize, mut pairs: Vec<(usize, f64)>) -> Result<Self, FeatureError> {
        pairs.retain(|&(_, v)| v != 0.0);
        pairs.sort_by_key(|&(i, _)| i);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(FeatureError::Malformed("duplicate index".into()));
        }
        if pairs.last().is_some_and(|&(i, _)| i >= dim) {
            return Err(FeatureError::Malformed("index out of range".into()));
        }
        Ok(Self {
            dim,
            indices: pairs.iter().map(|&(i, _)| i as u32).collect(),
            values: pairs.iter().map(|&(_, v)| v).collect(),
        })
    }

    pub fn from_dense(values: &[f64]) -> Self {
        let pairs = values.iter().copied().enumerate().collect();
        Self::from_pairs(values.len(), pairs).expect("dense input is well-formed")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_zero(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    pub fn get(&self, i: usize) -> f64 {
        match self.indices.binary_search(&(i as u32)) {
            Ok(p) => self.values[p],
            Err(_) => 0.0,
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    fn normalized(mut self) -> Self {
        let norm = self.norm();
        if norm > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= norm);
        }
        self
    }
}

/// tf-idf vector of `text`, L2-normalized. Out-of-vocabulary grams are
/// ignored; a text with no known gram maps to the zero vector.
pub fn vectorize_text(text: &str, space: &FeatureSpace) -> FeatureVector {
    let mut pairs = Vec::new();
    for kind in [NGramKind::Word, NGramKind::Char] {
        let tf = relative_tf(extract_ngrams(text, kind, space.n_range));
        pairs.extend(
            tf.into_iter()
                .filter_map(|(k, tf)| space.index_of(&k).map(|i| (i, tf * space.idf[i]))),
        );
    }
    FeatureVector::from_pairs(space.dim(), pairs)
        .expect("feature indices are unique and in range")
        .normalized()
}

pub fn vectorize(doc: &Document, space: &FeatureSpace) -> FeatureVector {
    vectorize_text(&doc.text, space)
}

/// Vectorizes every document, in corpus order.
pub fn vectorize_corpus(corpus: &Corpus, space: &FeatureSpace) -> Vec<FeatureVector> {
    par::map(corpus.documents(), |d| vectorize(d, space))
}
