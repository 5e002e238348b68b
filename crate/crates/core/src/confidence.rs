//! Monte-Carlo dropout confidence.
//!
//! A classifier is run `n` times with dropout active; the per-class mean of
//! the sampled distributions is the pooled distribution, and its maximum is
//! the confidence of the prediction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{ClassDistribution, ClassifierError, PredictMode, ProbClassifier};
use crate::corpus::{Document, GenreLabel, NUM_CLASSES};
use crate::features::{vectorize, FeatureSpace, FeatureVector};
use crate::par;

#[derive(Debug, Error)]
pub enum ConfidenceError {
    #[error("cannot pool an empty list of distributions")]
    EmptyInput,
    #[error("confidence delta needs both correct and incorrect predictions")]
    NoErrorsNoSuccesses,
    #[error("record {0:?} has no gold label")]
    MissingGold(String),
    #[error("n_samples must be at least 1")]
    NoSamples,
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfidenceConfig {
    pub n_samples: usize,
    pub dropout_p: f64,
    pub base_seed: u64,
}

impl Default for ConfidenceConfig {
    fn default() -> Self {
        Self {
            n_samples: 10,
            dropout_p: 0.1,
            base_seed: 0,
        }
    }
}

/// Runs `n_samples` stochastic passes; pass `i` uses seed `base_seed + i`.
pub fn sample_distributions<C: ProbClassifier + ?Sized>(
    clf: &C,
    vec: &FeatureVector,
    cfg: &ConfidenceConfig,
) -> Result<Vec<ClassDistribution>, ConfidenceError> {
    if cfg.n_samples == 0 {
        return Err(ConfidenceError::NoSamples);
    }
    if !clf.supports_dropout() {
        return Err(ClassifierError::StochasticUnsupported.into());
    }
    (0..cfg.n_samples as u64)
        .map(|i| {
            clf.predict_dropout(vec, cfg.base_seed.wrapping_add(i), cfg.dropout_p)
                .map_err(Into::into)
        })
        .collect()
}

/// Per-class arithmetic mean.
pub fn pool(samples: &[ClassDistribution]) -> Result<ClassDistribution, ConfidenceError> {
    if samples.is_empty() {
        return Err(ConfidenceError::EmptyInput);
    }
    let mut mean = vec![0.0; NUM_CLASSES];
    for s in samples {
        for (m, p) in mean.iter_mut().zip(s.probs()) {
            *m += p;
        }
    }
    let n = samples.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(ClassDistribution::new(mean)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRecord {
    pub doc_id: String,
    pub pooled: ClassDistribution,
    pub confidence: f64,
    pub predicted: GenreLabel,
    pub gold: Option<GenreLabel>,
    pub correct: Option<bool>,
}

impl ConfidenceRecord {
    pub fn from_pooled(doc_id: impl Into<String>, pooled: ClassDistribution, gold: Option<GenreLabel>) -> Self {
        let predicted = pooled.argmax_label();
        Self {
            doc_id: doc_id.into(),
            confidence: pooled.max_prob(),
            predicted,
            correct: gold.map(|g| g == predicted),
            gold,
            pooled,
        }
    }
}

/// Pooled distribution of one vectorized input. Classifiers without dropout
/// have nothing to sample, so their deterministic output is the pooled
/// distribution.
pub fn pooled_prediction<C: ProbClassifier + ?Sized>(
    clf: &C,
    vec: &FeatureVector,
    cfg: &ConfidenceConfig,
) -> Result<ClassDistribution, ConfidenceError> {
    if clf.supports_dropout() {
        pool(&sample_distributions(clf, vec, cfg)?)
    } else {
        Ok(clf.predict(vec, PredictMode::Deterministic)?)
    }
}

pub fn confidence_of<C: ProbClassifier + ?Sized>(
    clf: &C,
    doc: &Document,
    space: &FeatureSpace,
    cfg: &ConfidenceConfig,
) -> Result<ConfidenceRecord, ConfidenceError> {
    let pooled = pooled_prediction(clf, &vectorize(doc, space), cfg)?;
    Ok(ConfidenceRecord::from_pooled(&doc.id, pooled, doc.label))
}

/// Confidence records for pre-vectorized documents, in input order.
pub fn confidence_records<C: ProbClassifier + ?Sized>(
    clf: &C,
    docs: &[Document],
    vectors: &[FeatureVector],
    cfg: &ConfidenceConfig,
) -> Result<Vec<ConfidenceRecord>, ConfidenceError> {
    let pooled = par::try_map(vectors, |v| pooled_prediction(clf, v, cfg))?;
    Ok(docs
        .iter()
        .zip(pooled)
        .map(|(d, p)| ConfidenceRecord::from_pooled(&d.id, p, d.label))
        .collect())
}

/// Mean confidence of correct vs. wrong predictions. `None` marks an empty
/// group (and therefore an undefined delta).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaStats {
    pub mean_conf_correct: Option<f64>,
    pub mean_conf_wrong: Option<f64>,
    pub delta: Option<f64>,
    pub n_correct: usize,
    pub n_wrong: usize,
}

impl DeltaStats {
    fn from_groups(correct: &[f64], wrong: &[f64]) -> Self {
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let (c, w) = (mean(correct), mean(wrong));
        Self {
            mean_conf_correct: c,
            mean_conf_wrong: w,
            delta: c.zip(w).map(|(c, w)| c - w),
            n_correct: correct.len(),
            n_wrong: wrong.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceDeltaReport {
    pub per_genre: BTreeMap<GenreLabel, DeltaStats>,
    pub total: DeltaStats,
}

/// Correct and wrong confidences, optionally restricted to one gold genre.
pub fn split_by_correctness(records: &[ConfidenceRecord], genre: Option<GenreLabel>) -> (Vec<f64>, Vec<f64>) {
    let mut correct = Vec::new();
    let mut wrong = Vec::new();
    for r in records {
        if genre.is_some() && r.gold != genre {
            continue;
        }
        match r.correct {
            Some(true) => correct.push(r.confidence),
            Some(false) => wrong.push(r.confidence),
            None => {}
        }
    }
    (correct, wrong)
}

/// Confidence delta per gold genre and overall.
pub fn confidence_delta(records: &[ConfidenceRecord]) -> Result<ConfidenceDeltaReport, ConfidenceError> {
    if let Some(r) = records.iter().find(|r| r.gold.is_none()) {
        return Err(ConfidenceError::MissingGold(r.doc_id.clone()));
    }
    let (correct, wrong) = split_by_correctness(records, None);
    if correct.is_empty() || wrong.is_empty() {
        return Err(ConfidenceError::NoErrorsNoSuccesses);
    }
    let mut per_genre = BTreeMap::new();
    for genre in records.iter().filter_map(|r| r.gold) {
        per_genre.entry(genre).or_insert_with(|| {
            let (c, w) = split_by_correctness(records, Some(genre));
            DeltaStats::from_groups(&c, &w)
        });
    }
    Ok(ConfidenceDeltaReport {
        per_genre,
        total: DeltaStats::from_groups(&correct, &wrong),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub threshold: f64,
    pub kept: Vec<ConfidenceRecord>,
    pub rejected: Vec<ConfidenceRecord>,
    pub kept_fraction: f64,
    /// Accuracy over kept records with gold labels; `None` if there are none.
    pub kept_accuracy: Option<f64>,
}

/// Keeps records whose confidence is at least `threshold`.
pub fn reject_below(records: &[ConfidenceRecord], threshold: f64) -> Rejection {
    let (kept, rejected): (Vec<_>, Vec<_>) = records.iter().cloned().partition(|r| r.confidence >= threshold);
    let judged: Vec<bool> = kept.iter().filter_map(|r| r.correct).collect();
    let kept_accuracy =
        (!judged.is_empty()).then(|| judged.iter().filter(|&&c| c).count() as f64 / judged.len() as f64);
    Rejection {
        threshold,
        kept_fraction: if records.is_empty() { 0.0 } else { kept.len() as f64 / records.len() as f64 },
        kept,
        rejected,
        kept_accuracy,
    }
}

/// One point of a rejection sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub kept_fraction: f64,
    pub kept_accuracy: Option<f64>,
}

/// Thresholds 0, step, 2·step, …, 1.
pub fn rejection_sweep(records: &[ConfidenceRecord], step: f64) -> Vec<SweepPoint> {
    let n = (1.0 / step).round() as usize;
    (0..=n)
        .map(|i| {
            let threshold = (i as f64 * step).min(1.0);
            let r = reject_below(records, threshold);
            SweepPoint {
                threshold,
                kept_fraction: r.kept_fraction,
                kept_accuracy: r.kept_accuracy,
            }
        })
        .collect()
}
