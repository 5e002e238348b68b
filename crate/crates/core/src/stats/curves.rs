use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{seed_ci, MetricWithCI, StatsError};
use crate::classifiers::{EpochRecord, PredictMode, ProbClassifier};
use crate::corpus::{split, Corpus, GenreLabel, SplitSpec};
use crate::features::FeatureVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub fraction: f64,
    pub train_size: usize,
    pub metric: MetricWithCI,
    pub per_seed: Vec<f64>,
}

/// Metric as a function of training-set size. For each (fraction, seed) a
/// stratified subsample of `train` is drawn with that seed (fraction 1.0
/// uses `train` as is) and handed to `eval` with the seed. Cells run on
/// the worker pool.
pub fn learning_curve<F, E>(
    train: &Corpus,
    test: &Corpus,
    fractions: &[f64],
    seeds: &[u64],
    eval: F,
) -> Result<Vec<CurvePoint>, E>
where
    F: Fn(&Corpus, &Corpus, u64) -> Result<f64, E> + Sync + Send,
    E: Send + From<StatsError>,
{
    if seeds.is_empty() {
        return Err(StatsError::NoSeeds.into());
    }
    let valid = !fractions.is_empty()
        && fractions.iter().all(|&f| f > 0.0 && f <= 1.0)
        && fractions.windows(2).all(|w| w[0] < w[1]);
    if !valid {
        return Err(StatsError::InvalidFractions.into());
    }

    let cells: Vec<(f64, u64)> = fractions
        .iter()
        .flat_map(|&f| seeds.iter().map(move |&s| (f, s)))
        .collect();
    let results = crate::par::try_map(&cells, |&(fraction, seed)| {
        if fraction >= 1.0 {
            return eval(train, test, seed).map(|m| (train.len(), m));
        }
        let spec = SplitSpec {
            train_fraction: fraction,
            seed,
            stratified: true,
        };
        let (sub, _) = split(train, &spec).map_err(|e| E::from(StatsError::Corpus(e)))?;
        eval(&sub, test, seed).map(|m| (sub.len(), m))
    })?;

    fractions
        .iter()
        .zip(results.chunks(seeds.len()))
        .map(|(&fraction, chunk)| {
            let per_seed: Vec<f64> = chunk.iter().map(|c| c.1).collect();
            Ok(CurvePoint {
                fraction,
                train_size: chunk[0].0,
                metric: seed_ci(&per_seed)?,
                per_seed,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSweep {
    pub rows: Vec<EpochRow>,
}

impl EpochSweep {
    /// Epoch with the highest validation accuracy; the earliest wins ties.
    pub fn best_val_epoch(&self) -> Option<usize> {
        let mut best: Option<&EpochRow> = None;
        for r in &self.rows {
            if best.is_none_or(|b| r.val_acc > b.val_acc) {
                best = Some(r);
            }
        }
        best.map(|r| r.epoch)
    }

    /// train_acc - val_acc at the final epoch.
    pub fn final_gap(&self) -> Option<f64> {
        self.rows.last().map(|r| r.train_acc - r.val_acc)
    }
}

/// Accuracy per epoch from a single traced training run. `run` receives
/// `max_epochs` and must return one record per epoch with validation
/// accuracy filled in.
pub fn epoch_sweep<F, E>(max_epochs: usize, run: F) -> Result<EpochSweep, E>
where
    F: FnOnce(usize) -> Result<Vec<EpochRecord>, E>,
    E: From<StatsError>,
{
    if max_epochs == 0 {
        return Err(StatsError::InvalidEpochs.into());
    }
    let trace = run(max_epochs)?;
    if trace.len() != max_epochs {
        return Err(StatsError::EpochCount {
            expected: max_epochs,
            got: trace.len(),
        }
        .into());
    }
    let rows = trace
        .iter()
        .map(|r| EpochRow {
            epoch: r.epoch,
            train_acc: r.train_acc,
            val_acc: r.val_acc.unwrap_or(f64::NAN),
        })
        .collect();
    Ok(EpochSweep { rows })
}

/// Predicted-genre tally over a (possibly unlabeled) document set. All
/// eleven labels appear, so NONTEXT shows up with its count even though
/// no classifier predicts it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenreDistribution {
    pub total: usize,
    pub counts: BTreeMap<GenreLabel, usize>,
    pub percentages: BTreeMap<GenreLabel, f64>,
}

impl GenreDistribution {
    pub fn from_labels<I: IntoIterator<Item = GenreLabel>>(labels: I) -> Self {
        let mut counts: BTreeMap<GenreLabel, usize> = GenreLabel::ALL.iter().map(|&g| (g, 0)).collect();
        let mut total = 0;
        for l in labels {
            *counts.entry(l).or_default() += 1;
            total += 1;
        }
        let percentages = counts
            .iter()
            .map(|(&g, &c)| (g, if total == 0 { 0.0 } else { 100.0 * c as f64 / total as f64 }))
            .collect();
        Self {
            total,
            counts,
            percentages,
        }
    }

    /// Counts over the ten trainable genres, in label order.
    pub fn trainable_counts(&self) -> Vec<u64> {
        GenreLabel::GENRES.iter().map(|g| self.counts[g] as u64).collect()
    }
}

pub fn predict_distribution<C: ProbClassifier + ?Sized>(
    clf: &C,
    vectors: &[FeatureVector],
) -> Result<GenreDistribution, StatsError> {
    let labels = crate::par::try_map(vectors, |v| {
        clf.predict(v, PredictMode::Deterministic).map(|d| d.argmax_label())
    })?;
    Ok(GenreDistribution::from_labels(labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn corpus(n_per: usize) -> Corpus {
        let docs = GenreLabel::GENRES
            .iter()
            .flat_map(|&g| {
                (0..n_per).map(move |i| Document::new(format!("{}-{i}", g.code()), &format!("text {i}"), Some(g)).unwrap())
            })
            .collect();
        Corpus::new(docs).unwrap()
    }

    #[test]
    fn curve_shapes_and_sizes() {
        let train = corpus(20);
        let test = corpus(2);
        let pts = learning_curve(&train, &test, &[0.5, 1.0], &[1, 2, 3], |tr, _, seed| {
            Ok::<_, StatsError>(tr.len() as f64 + seed as f64)
        })
        .unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].train_size, 100);
        assert_eq!(pts[1].train_size, 200);
        assert_eq!(pts[1].per_seed, vec![201.0, 202.0, 203.0]);
        assert!((pts[1].metric.mean - 202.0).abs() < 1e-12);
    }

    #[test]
    fn curve_rejects_bad_input() {
        let c = corpus(2);
        let ok = |_: &Corpus, _: &Corpus, _: u64| Ok::<_, StatsError>(0.0);
        assert!(matches!(learning_curve(&c, &c, &[0.5], &[], ok), Err(StatsError::NoSeeds)));
        assert!(matches!(learning_curve(&c, &c, &[0.0], &[1], ok), Err(StatsError::InvalidFractions)));
        assert!(matches!(learning_curve(&c, &c, &[1.0, 0.5], &[1], ok), Err(StatsError::InvalidFractions)));
    }

    #[test]
    fn sweep_summary() {
        let rec = |epoch, t, v| EpochRecord {
            epoch,
            train_loss: 0.0,
            train_acc: t,
            val_acc: Some(v),
        };
        let s = epoch_sweep(3, |_| Ok::<_, StatsError>(vec![rec(1, 0.5, 0.4), rec(2, 0.9, 0.7), rec(3, 1.0, 0.7)])).unwrap();
        assert_eq!(s.best_val_epoch(), Some(2));
        assert!((s.final_gap().unwrap() - 0.3).abs() < 1e-12);
        assert!(matches!(epoch_sweep(2, |_| Ok::<_, StatsError>(vec![])), Err(StatsError::EpochCount { .. })));
        assert!(matches!(epoch_sweep(0, |_| Ok::<_, StatsError>(vec![])), Err(StatsError::InvalidEpochs)));
    }

    #[test]
    fn distribution_includes_nontext() {
        let d = GenreDistribution::from_labels([GenreLabel::A1, GenreLabel::A1, GenreLabel::A8, GenreLabel::A12]);
        assert_eq!(d.counts.len(), 11);
        assert_eq!(d.counts[&GenreLabel::NonText], 0);
        assert_eq!(d.percentages[&GenreLabel::A1], 50.0);
        assert_eq!(d.trainable_counts().iter().sum::<u64>(), 4);
    }
}
