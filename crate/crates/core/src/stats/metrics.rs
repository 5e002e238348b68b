use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::corpus::{GenreLabel, NUM_CLASSES};

/// Counts indexed `[gold][predicted]` over the ten trainable genres.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: [[u64; NUM_CLASSES]; NUM_CLASSES]) -> Self {
        Self { counts }
    }

    /// Builds from (gold, predicted) pairs. Non-trainable labels are skipped.
    pub fn from_pairs<I: IntoIterator<Item = (GenreLabel, GenreLabel)>>(pairs: I) -> Self {
        let mut cm = Self::new();
        for (g, p) in pairs {
            cm.record(g, p);
        }
        cm
    }

    pub fn record(&mut self, gold: GenreLabel, predicted: GenreLabel) {
        if let (Some(g), Some(p)) = (gold.class_index(), predicted.class_index()) {
            self.counts[g][p] += 1;
        }
    }

    pub fn add(&mut self, gold: GenreLabel, predicted: GenreLabel, n: u64) {
        if let (Some(g), Some(p)) = (gold.class_index(), predicted.class_index()) {
            self.counts[g][p] += n;
        }
    }

    pub fn get(&self, gold: GenreLabel, predicted: GenreLabel) -> u64 {
        match (gold.class_index(), predicted.class_index()) {
            (Some(g), Some(p)) => self.counts[g][p],
            _ => 0,
        }
    }

    pub fn counts(&self) -> &[[u64; NUM_CLASSES]; NUM_CLASSES] {
        &self.counts
    }

    pub fn row_sum(&self, g: usize) -> u64 {
        self.counts[g].iter().sum()
    }

    pub fn col_sum(&self, p: usize) -> u64 {
        self.counts.iter().map(|r| r[p]).sum()
    }

    pub fn totals_per_gold(&self) -> [u64; NUM_CLASSES] {
        std::array::from_fn(|g| self.row_sum(g))
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub per_class: BTreeMap<GenreLabel, f64>,
    pub accuracy: f64,
}

/// Per-genre F1 and accuracy. A genre with P + R = 0 (never predicted
/// correctly) gets F1 = 0.
pub fn per_class_f1(cm: &ConfusionMatrix) -> Result<F1Report, StatsError> {
    let total = cm.total();
    if total == 0 {
        return Err(StatsError::EmptyMatrix);
    }
    let per_class = GenreLabel::GENRES
        .iter()
        .enumerate()
        .map(|(g, &label)| {
            let tp = cm.counts[g][g] as f64;
            let (col, row) = (cm.col_sum(g) as f64, cm.row_sum(g) as f64);
            let precision = if col > 0.0 { tp / col } else { 0.0 };
            let recall = if row > 0.0 { tp / row } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            (label, f1)
        })
        .collect();
    Ok(F1Report {
        per_class,
        accuracy: cm.trace() as f64 / total as f64,
    })
}

/// Mean with sample standard deviation as the half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWithCI {
    pub mean: f64,
    pub halfwidth: f64,
    pub n_seeds: usize,
}

pub fn seed_ci(values: &[f64]) -> Result<MetricWithCI, StatsError> {
    if values.is_empty() {
        return Err(StatsError::NoValues);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let halfwidth = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(MetricWithCI {
        mean,
        halfwidth,
        n_seeds: values.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionPair {
    pub gold: GenreLabel,
    pub predicted: GenreLabel,
    /// Share of the gold genre's documents predicted as `predicted`.
    pub rate: f64,
}

/// The `k` largest off-diagonal rates, ties in label order.
pub fn top_confusions(cm: &ConfusionMatrix, k: usize) -> Vec<ConfusionPair> {
    let mut pairs = Vec::new();
    for g in 0..NUM_CLASSES {
        let row = cm.row_sum(g);
        for p in (0..NUM_CLASSES).filter(|&p| p != g) {
            let c = cm.counts[g][p];
            if c > 0 {
                pairs.push(ConfusionPair {
                    gold: GenreLabel::GENRES[g],
                    predicted: GenreLabel::GENRES[p],
                    rate: c as f64 / row as f64,
                });
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.rate
            .total_cmp(&a.rate)
            .then(a.gold.cmp(&b.gold))
            .then(a.predicted.cmp(&b.predicted))
    });
    pairs.truncate(k);
    pairs
}
