//! Probabilistic classifiers.
//!
//! Every model maps a [`FeatureVector`] to a [`ClassDistribution`] over the
//! ten trainable genres. Models with dropout can also run stochastic forward
//! passes, which the confidence estimator samples from.

mod adam;
mod artifact;
mod logreg;
mod mlp;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, GenreLabel, NUM_CLASSES};
use crate::features::{vectorize_corpus, FeatureSpace, FeatureVector};

pub use adam::Adam;
pub use artifact::{load_model, save_model, ModelArtifact, MODEL_SCHEMA_VERSION};
pub use logreg::{logreg_loss, logreg_loss_and_grad, train_logreg, train_logreg_traced, LogRegGrad, LogRegModel};
pub use mlp::{train_mlp, train_mlp_traced, MlpModel};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training data holds fewer than two distinct labels")]
    DegenerateLabels,
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("feature dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("model does not support stochastic (dropout) prediction")]
    StochasticUnsupported,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("invalid class distribution: {0}")]
    InvalidDistribution(String),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("labels required: {0}")]
    Unlabeled(String),
    #[error("model artifact error: {0}")]
    Artifact(String),
    #[error("model was trained against feature space {expected}, got {got}")]
    FingerprintMismatch { expected: String, got: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Probability vector over the genres, in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ClassDistribution(Vec<f64>);

impl ClassDistribution {
    pub const TOLERANCE: f64 = 1e-9;

    pub fn new(probs: Vec<f64>) -> Result<Self, ClassifierError> {
        if probs.len() != NUM_CLASSES {
            return Err(ClassifierError::InvalidDistribution(format!(
                "expected {NUM_CLASSES} entries, got {}",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(ClassifierError::InvalidDistribution(format!("entry {p} outside [0,1]")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::TOLERANCE {
            return Err(ClassifierError::InvalidDistribution(format!("sums to {sum}")));
        }
        Ok(Self(probs))
    }

    pub fn uniform() -> Self {
        Self(vec![1.0 / NUM_CLASSES as f64; NUM_CLASSES])
    }

    /// One-hot on `label`; panics for the non-text category.
    pub fn one_hot(label: GenreLabel) -> Self {
        let mut p = vec![0.0; NUM_CLASSES];
        p[label.class_index().expect("trainable label")] = 1.0;
        Self(p)
    }

    pub fn softmax(logits: &[f64]) -> Self {
        let mut out = logits.to_vec();
        softmax_in_place(&mut out);
        Self(out)
    }

    /// Divides by the sum; used after weighted pooling to remove drift.
    pub(crate) fn renormalized(mut probs: Vec<f64>) -> Self {
        let sum: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p = (*p / sum).clamp(0.0, 1.0));
        Self(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn max_prob(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the maximal probability, lowest index on ties.
    pub fn argmax_index(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate().skip(1) {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn argmax_label(&self) -> GenreLabel {
        GenreLabel::GENRES[self.argmax_index()]
    }
}

impl TryFrom<Vec<f64>> for ClassDistribution {
    type Error = ClassifierError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ClassDistribution> for Vec<f64> {
    fn from(d: ClassDistribution) -> Self {
        d.0
    }
}

pub fn argmax_label(dist: &ClassDistribution) -> GenreLabel {
    dist.argmax_label()
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum PredictMode {
    Deterministic,
    /// One dropout mask per layer, drawn from `seed`.
    Stochastic { seed: u64 },
}

/// Shared contract of all classifiers, ensembles included.
pub trait ProbClassifier: Send + Sync {
    /// Input dimension.
    fn dim(&self) -> usize;

    fn supports_dropout(&self) -> bool;

    /// Stochastic pass at an explicit dropout rate.
    fn predict_dropout(
        &self,
        vec: &FeatureVector,
        seed: u64,
        rate: f64,
    ) -> Result<ClassDistribution, ClassifierError>;

    fn predict(&self, vec: &FeatureVector, mode: PredictMode) -> Result<ClassDistribution, ClassifierError>;

    fn classes(&self) -> &'static [GenreLabel] {
        &GenreLabel::GENRES
    }

    fn check_dim(&self, vec: &FeatureVector) -> Result<(), ClassifierError> {
        if vec.dim() == self.dim() {
            Ok(())
        } else {
            Err(ClassifierError::DimensionMismatch {
                expected: self.dim(),
                got: vec.dim(),
            })
        }
    }
}

/// Optimizer and schedule settings shared by both trainers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub l2: f64,
    /// MLP only.
    pub hidden: usize,
    /// MLP only; applied during training and stochastic inference.
    pub dropout_p: f64,
}

impl TrainConfig {
    pub fn logreg() -> Self {
        Self {
            lr: 0.1,
            batch_size: 16,
            epochs: 4,
            seed: 0,
            l2: 1e-4,
            hidden: 0,
            dropout_p: 0.0,
        }
    }

    pub fn mlp() -> Self {
        Self {
            lr: 1e-2,
            batch_size: 16,
            epochs: 4,
            seed: 0,
            l2: 0.0,
            hidden: 256,
            dropout_p: 0.1,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_epochs(self, epochs: usize) -> Self {
        Self { epochs, ..self }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidConfig(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.l2 >= 0.0) {
            return bad("l2 must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad("dropout_p must lie in [0,1)");
        }
        Ok(())
    }
}

/// Vectorized, labeled training data.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub vectors: Vec<FeatureVector>,
    pub labels: Vec<usize>,
    dim: usize,
}

impl Dataset {
    pub fn new(vectors: Vec<FeatureVector>, labels: &[GenreLabel]) -> Result<Self, ClassifierError> {
        let dim = vectors.first().map_or(0, FeatureVector::dim);
        if let Some(v) = vectors.iter().find(|v| v.dim() != dim) {
            return Err(ClassifierError::DimensionMismatch { expected: dim, got: v.dim() });
        }
        if vectors.len() != labels.len() {
            return Err(ClassifierError::InvalidConfig("vectors and labels differ in length".into()));
        }
        let labels = labels
            .iter()
            .map(|l| {
                l.class_index()
                    .ok_or_else(|| ClassifierError::InvalidConfig(format!("{l} is not trainable")))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { vectors, labels, dim })
    }

    /// Vectorizes a labeled corpus against `space`.
    pub fn from_corpus(corpus: &Corpus, space: &FeatureSpace) -> Result<Self, ClassifierError> {
        let labels = corpus
            .labels()
            .map_err(|e| ClassifierError::Unlabeled(e.to_string()))?;
        let mut ds = Self::new(vectorize_corpus(corpus, space), &labels)?;
        ds.dim = space.dim();
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gold(&self) -> impl Iterator<Item = GenreLabel> + '_ {
        self.labels.iter().map(|&i| GenreLabel::GENRES[i])
    }

    fn check_trainable(&self) -> Result<(), ClassifierError> {
        if self.is_empty() {
            return Err(ClassifierError::EmptyTrainingSet);
        }
        let first = self.labels[0];
        if self.labels.iter().all(|&l| l == first) {
            return Err(ClassifierError::DegenerateLabels);
        }
        Ok(())
    }
}

/// Per-epoch training trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

/// Accuracy of deterministic predictions on `data`.
pub fn accuracy<C: ProbClassifier + ?Sized>(clf: &C, data: &Dataset) -> Result<f64, ClassifierError> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let preds = crate::par::try_map(&data.vectors, |v| {
        clf.predict(v, PredictMode::Deterministic).map(|d| d.argmax_index())
    })?;
    let hits = preds.iter().zip(&data.labels).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / data.len() as f64)
}

/// A trained model of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    LogReg(LogRegModel),
    Mlp(MlpModel),
}

impl TrainedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            TrainedModel::LogReg(_) => "logreg",
            TrainedModel::Mlp(_) => "mlp",
        }
    }
}

impl ProbClassifier for TrainedModel {
    fn dim(&self) -> usize {
        match self {
            TrainedModel::LogReg(m) => m.dim(),
            TrainedModel::Mlp(m) => m.dim(),
        }
    }

    fn supports_dropout(&self) -> bool {
        matches!(self, TrainedModel::Mlp(_))
    }

    fn predict_dropout(&self, vec: &FeatureVector, seed: u64, rate: f64) -> Result<ClassDistribution, ClassifierError> {
        match self {
            TrainedModel::LogReg(m) => m.predict_dropout(vec, seed, rate),
            TrainedModel::Mlp(m) => m.predict_dropout(vec, seed, rate),
        }
    }

    fn predict(&self, vec: &FeatureVector, mode: PredictMode) -> Result<ClassDistribution, ClassifierError> {
        match self {
            TrainedModel::LogReg(m) => m.predict(vec, mode),
            TrainedModel::Mlp(m) => m.predict(vec, mode),
        }
    }
}

impl From<LogRegModel> for TrainedModel {
    fn from(m: LogRegModel) -> Self {
        TrainedModel::LogReg(m)
    }
}

impl From<MlpModel> for TrainedModel {
    fn from(m: MlpModel) -> Self {
        TrainedModel::Mlp(m)
    }
}
