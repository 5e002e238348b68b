//! Corpus ingestion, the genre label schema, stratified splitting and
//! head-only truncation.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::features::word_spans;
use crate::rng;

/// Number of trainable genre classes.
pub const NUM_CLASSES: usize = 10;

/// Functional genre labels. The ten trainable genres come first, in schema
/// order; `NonText` only ever shows up as a prediction category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GenreLabel {
    #[serde(rename = "A1")]
    A1,
    #[serde(rename = "A4")]
    A4,
    #[serde(rename = "A7")]
    A7,
    #[serde(rename = "A8")]
    A8,
    #[serde(rename = "A9")]
    A9,
    #[serde(rename = "A11")]
    A11,
    #[serde(rename = "A12")]
    A12,
    #[serde(rename = "A14")]
    A14,
    #[serde(rename = "A16")]
    A16,
    #[serde(rename = "A17")]
    A17,
    #[serde(rename = "NONTEXT")]
    NonText,
}

impl GenreLabel {
    /// The ten trainable genres in schema order.
    pub const GENRES: [GenreLabel; NUM_CLASSES] = [
        GenreLabel::A1,
        GenreLabel::A4,
        GenreLabel::A7,
        GenreLabel::A8,
        GenreLabel::A9,
        GenreLabel::A11,
        GenreLabel::A12,
        GenreLabel::A14,
        GenreLabel::A16,
        GenreLabel::A17,
    ];

    /// All eleven members, including the prediction-only non-text category.
    pub const ALL: [GenreLabel; NUM_CLASSES + 1] = [
        GenreLabel::A1,
        GenreLabel::A4,
        GenreLabel::A7,
        GenreLabel::A8,
        GenreLabel::A9,
        GenreLabel::A11,
        GenreLabel::A12,
        GenreLabel::A14,
        GenreLabel::A16,
        GenreLabel::A17,
        GenreLabel::NonText,
    ];

    pub fn code(self) -> &'static str {
        match self {
            GenreLabel::A1 => "A1",
            GenreLabel::A4 => "A4",
            GenreLabel::A7 => "A7",
            GenreLabel::A8 => "A8",
            GenreLabel::A9 => "A9",
            GenreLabel::A11 => "A11",
            GenreLabel::A12 => "A12",
            GenreLabel::A14 => "A14",
            GenreLabel::A16 => "A16",
            GenreLabel::A17 => "A17",
            GenreLabel::NonText => "NONTEXT",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            GenreLabel::A1 => "Argument",
            GenreLabel::A4 => "Fiction",
            GenreLabel::A7 => "Instruction",
            GenreLabel::A8 => "News",
            GenreLabel::A9 => "Legal",
            GenreLabel::A11 => "Personal",
            GenreLabel::A12 => "Promotion",
            GenreLabel::A14 => "Academic",
            GenreLabel::A16 => "Information",
            GenreLabel::A17 => "Review",
            GenreLabel::NonText => "Non-text",
        }
    }

    /// Position in the class-probability vector; `None` for `NonText`.
    pub fn class_index(self) -> Option<usize> {
        Self::GENRES.iter().position(|&g| g == self)
    }

    /// Inverse of [`GenreLabel::class_index`].
    pub fn from_class_index(idx: usize) -> Option<GenreLabel> {
        Self::GENRES.get(idx).copied()
    }

    pub fn is_trainable(self) -> bool {
        self != GenreLabel::NonText
    }
}

impl fmt::Display for GenreLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for GenreLabel {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GenreLabel::ALL
            .iter()
            .copied()
            .find(|g| g.code() == s)
            .ok_or_else(|| CorpusError::UnknownLabel(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("unknown genre label {0:?}")]
    UnknownLabel(String),
    #[error("corpus contains no documents")]
    EmptyCorpus,
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("document {0:?} has no label but a stratified split was requested")]
    UnlabeledDocument(String),
    #[error("document {0:?} has empty text")]
    EmptyText(String),
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
}

/// A labeled (or unlabeled) text unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<GenreLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl Document {
    /// Builds a document, NFC-normalizing the text. Text that is empty after
    /// trimming is rejected.
    pub fn new(
        id: impl Into<String>,
        text: &str,
        label: Option<GenreLabel>,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        let text: String = text.nfc().collect();
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyText(id));
        }
        Ok(Self {
            id,
            text,
            label,
            source: None,
        })
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }
}

/// Ordered collection of documents with unique ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    documents: Vec<Document>,
    label_counts: BTreeMap<GenreLabel, usize>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(documents.len());
        for d in &documents {
            if !seen.insert(d.id.as_str()) {
                return Err(CorpusError::DuplicateId(d.id.clone()));
            }
        }
        Ok(Self::from_unique(documents))
    }

    fn from_unique(documents: Vec<Document>) -> Self {
        let mut label_counts = BTreeMap::new();
        for label in documents.iter().filter_map(|d| d.label) {
            *label_counts.entry(label).or_insert(0) += 1;
        }
        Self {
            documents,
            label_counts,
        }
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn into_documents(self) -> Vec<Document> {
        self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.documents.iter()
    }

    pub fn label_counts(&self) -> &BTreeMap<GenreLabel, usize> {
        &self.label_counts
    }

    pub fn labeled_len(&self) -> usize {
        self.label_counts.values().sum()
    }

    /// Gold labels in document order; fails on the first unlabeled document.
    pub fn labels(&self) -> Result<Vec<GenreLabel>, CorpusError> {
        self.documents
            .iter()
            .map(|d| d.label.ok_or_else(|| CorpusError::UnlabeledDocument(d.id.clone())))
            .collect()
    }

    /// Prefixes every id with `tag/` and records `tag` as the source.
    pub fn with_id_prefix(&self, tag: &str) -> Corpus {
        let documents = self
            .documents
            .iter()
            .map(|d| Document {
                id: format!("{tag}/{}", d.id),
                source: Some(tag.to_string()),
                ..d.clone()
            })
            .collect();
        Corpus::from_unique(documents)
    }

    pub fn map_documents<F: Fn(&Document) -> Document>(&self, f: F) -> Corpus {
        Corpus::from_unique(self.documents.iter().map(f).collect())
    }

    /// SHA-256 over ids, labels and texts in order.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for d in &self.documents {
            h.update(d.id.as_bytes());
            h.update([0u8]);
            h.update(d.label.map(|l| l.code()).unwrap_or("-").as_bytes());
            h.update([0u8]);
            h.update(d.text.as_bytes());
            h.update([0xffu8]);
        }
        hex::encode(h.finalize())
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Document;
    type IntoIter = std::slice::Iter<'a, Document>;

    fn into_iter(self) -> Self::IntoIter {
        self.documents.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Tsv,
}

impl CorpusFormat {
    /// `.tsv` / `.tab` map to TSV, everything else to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("tab") => CorpusFormat::Tsv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

#[derive(Deserialize)]
struct JsonRecord {
    id: Option<String>,
    label: Option<String>,
    source: Option<String>,
    text: String,
}

fn parse_training_label(code: &str, line: usize) -> Result<Option<GenreLabel>, CorpusError> {
    if code.is_empty() {
        return Ok(None);
    }
    let label: GenreLabel = code.parse()?;
    if !label.is_trainable() {
        return Err(CorpusError::MalformedRecord {
            line,
            reason: format!("{code} is a prediction-only label"),
        });
    }
    Ok(Some(label))
}

/// Loads a corpus in file order. Missing ids become `<filename>#<line>`.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = fs::File::open(path).map_err(io_err)?;
    let filename = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default();

    let mut documents = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io_err)?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let (id, label, source, text) = match format {
            CorpusFormat::Jsonl => {
                let rec: JsonRecord =
                    serde_json::from_str(line).map_err(|e| CorpusError::MalformedRecord {
                        line: line_no,
                        reason: e.to_string(),
                    })?;
                let label = match rec.label.as_deref() {
                    Some(code) => parse_training_label(code, line_no)?,
                    None => None,
                };
                (rec.id, label, rec.source, rec.text)
            }
            CorpusFormat::Tsv => {
                let mut cols = line.splitn(3, '\t');
                let (Some(id), Some(label), Some(text)) = (cols.next(), cols.next(), cols.next())
                else {
                    return Err(CorpusError::MalformedRecord {
                        line: line_no,
                        reason: "expected 3 tab-separated columns".into(),
                    });
                };
                let id = (!id.is_empty()).then(|| id.to_string());
                (id, parse_training_label(label, line_no)?, None, text.to_string())
            }
        };
        let id = id.unwrap_or_else(|| format!("{filename}#{line_no}"));
        let mut doc = Document::new(id, &text, label).map_err(|_| CorpusError::MalformedRecord {
            line: line_no,
            reason: "empty text".into(),
        })?;
        doc.source = source;
        documents.push(doc);
    }
    if documents.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Corpus::new(documents)
}

/// Writes the canonical JSONL form; `load_corpus` reads it back unchanged.
pub fn write_jsonl(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for d in corpus {
        let line = serde_json::to_string(d).expect("documents always serialize");
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Train/test split parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.75,
            seed: 0,
            stratified: true,
        }
    }
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Self {
        Self {
            train_fraction,
            seed,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), CorpusError> {
        if self.train_fraction > 0.0 && self.train_fraction < 1.0 {
            Ok(())
        } else {
            Err(CorpusError::InvalidFraction(self.train_fraction))
        }
    }

    /// floor(count * fraction). The epsilon absorbs binary representation
    /// error so that e.g. 100 * 0.29 yields 29.
    pub fn train_count(&self, count: usize) -> usize {
        (((count as f64) * self.train_fraction + 1e-9).floor() as usize).min(count)
    }
}

/// Seeded split; both halves keep corpus order. Stratified mode floors each
/// label's share and sends the remainder to test.
pub fn split(corpus: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus), CorpusError> {
    spec.validate()?;
    let docs = corpus.documents();
    let mut in_train = vec![false; docs.len()];

    if spec.stratified {
        let mut groups: BTreeMap<GenreLabel, Vec<usize>> = BTreeMap::new();
        for (i, d) in docs.iter().enumerate() {
            let label = d
                .label
                .ok_or_else(|| CorpusError::UnlabeledDocument(d.id.clone()))?;
            groups.entry(label).or_default().push(i);
        }
        for (label, mut idx) in groups {
            let mut r = rng::child(spec.seed, label as u64);
            idx.shuffle(&mut r);
            for &i in &idx[..spec.train_count(idx.len())] {
                in_train[i] = true;
            }
        }
    } else {
        let mut idx: Vec<usize> = (0..docs.len()).collect();
        let mut r = rng::child(spec.seed, u64::MAX);
        idx.shuffle(&mut r);
        for &i in &idx[..spec.train_count(idx.len())] {
            in_train[i] = true;
        }
    }

    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (d, keep) in docs.iter().zip(in_train) {
        if keep {
            train.push(d.clone());
        } else {
            test.push(d.clone());
        }
    }
    Ok((Corpus::from_unique(train), Corpus::from_unique(test)))
}

/// Keeps the first `max_tokens` word tokens, joined by single spaces.
/// Documents already within the limit pass through untouched.
pub fn truncate_head(doc: &Document, max_tokens: usize) -> Document {
    let max_tokens = max_tokens.max(1);
    let spans: Vec<(usize, usize)> = word_spans(&doc.text).take(max_tokens + 1).collect();
    if spans.len() <= max_tokens {
        return doc.clone();
    }
    let text = spans[..max_tokens]
        .iter()
        .map(|&(s, e)| &doc.text[s..e])
        .collect::<Vec<_>>()
        .join(" ");
    Document {
        text,
        ..doc.clone()
    }
}

/// Concatenates corpora in order. Ids must be disjoint; use
/// [`Corpus::with_id_prefix`] first when they are not.
pub fn concat(corpora: &[Corpus]) -> Result<Corpus, CorpusError> {
    let docs = corpora
        .iter()
        .flat_map(|c| c.documents().iter().cloned())
        .collect();
    Corpus::new(docs)
}
