//! Evaluation statistics: F1 and seed spread, confusion pairs, rank and
//! chi-squared comparisons, learning/epoch curves and prediction tallies.

mod curves;
mod hypothesis;
mod metrics;

use thiserror::Error;

use crate::classifiers::ClassifierError;

pub use curves::{epoch_sweep, learning_curve, predict_distribution, CurvePoint, EpochRow, EpochSweep, GenreDistribution};
pub use hypothesis::{chi_squared_two_samples, mann_whitney, ChiSquaredResult, Group, MwuResult};
pub use metrics::{per_class_f1, seed_ci, top_confusions, ConfusionMatrix, ConfusionPair, F1Report, MetricWithCI};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("no values to aggregate")]
    NoValues,
    #[error("{0} group is empty")]
    EmptyGroup(Group),
    #[error("count vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("a sample has zero total count")]
    AllZero,
    #[error("fewer than two categories with nonzero counts")]
    TooFewCategories,
    #[error("fractions must be sorted and lie in (0,1]")]
    InvalidFractions,
    #[error("seed list is empty")]
    NoSeeds,
    #[error("max_epochs must be at least 1")]
    InvalidEpochs,
    #[error("trainer returned {got} epochs, expected {expected}")]
    EpochCount { expected: usize, got: usize },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}
