//! Weighted soft voting and validation-grid weight search.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{ClassDistribution, ClassifierError, Dataset, PredictMode, ProbClassifier};
use crate::corpus::NUM_CLASSES;
use crate::features::FeatureVector;
use crate::{par, rng};

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("an ensemble needs at least one member")]
    NoMembers,
    #[error("{members} members but {weights} weights")]
    WeightCount { members: usize, weights: usize },
    #[error("weights must be nonnegative and sum to 1 (got sum {0})")]
    InvalidWeights(f64),
    #[error("duplicate member name {0:?}")]
    DuplicateName(String),
    #[error("members disagree on input dimension ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("grid step {0} must lie in (0,1] and divide 1")]
    InvalidGridStep(f64),
    #[error("validation set is empty")]
    EmptyValidation,
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

/// A named member classifier.
#[derive(Clone)]
pub struct Member {
    pub name: String,
    pub model: Arc<dyn ProbClassifier>,
}

impl Member {
    pub fn new(name: impl Into<String>, model: Arc<dyn ProbClassifier>) -> Self {
        Self { name: name.into(), model }
    }
}

impl fmt::Debug for Member {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Member")
            .field("name", &self.name)
            .field("dim", &self.model.dim())
            .field("dropout", &self.model.supports_dropout())
            .finish()
    }
}

/// Convex combination of member distributions.
#[derive(Debug, Clone)]
pub struct Ensemble {
    members: Vec<Member>,
    weights: Vec<f64>,
}

impl Ensemble {
    pub fn new(members: Vec<Member>, weights: Vec<f64>) -> Result<Self, EnsembleError> {
        if members.is_empty() {
            return Err(EnsembleError::NoMembers);
        }
        if members.len() != weights.len() {
            return Err(EnsembleError::WeightCount { members: members.len(), weights: weights.len() });
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(EnsembleError::InvalidWeights(sum));
        }
        let mut names = HashSet::new();
        for m in &members {
            if !names.insert(m.name.as_str()) {
                return Err(EnsembleError::DuplicateName(m.name.clone()));
            }
        }
        let dim = members[0].model.dim();
        if let Some(m) = members.iter().find(|m| m.model.dim() != dim) {
            return Err(EnsembleError::DimensionMismatch(dim, m.model.dim()));
        }
        Ok(Self { members, weights })
    }

    /// Equal weights over all members.
    pub fn uniform(members: Vec<Member>) -> Result<Self, EnsembleError> {
        let n = members.len().max(1);
        Self::new(members, vec![1.0 / n as f64; n])
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn names(&self) -> Vec<&str> {
        self.members.iter().map(|m| m.name.as_str()).collect()
    }

    /// Same members, new weights.
    pub fn reweighted(&self, weights: Vec<f64>) -> Result<Self, EnsembleError> {
        Self::new(self.members.clone(), weights)
    }

    fn member_outputs(&self, vec: &FeatureVector, dropout: Option<(u64, Option<f64>)>) -> Result<Vec<ClassDistribution>, ClassifierError> {
        self.members
            .iter()
            .enumerate()
            .map(|(i, m)| match dropout {
                Some((seed, rate)) if m.model.supports_dropout() => {
                    let seed = rng::mix(seed, i as u64);
                    match rate {
                        Some(r) => m.model.predict_dropout(vec, seed, r),
                        None => m.model.predict(vec, PredictMode::Stochastic { seed }),
                    }
                }
                _ => m.model.predict(vec, PredictMode::Deterministic),
            })
            .collect()
    }
}

/// `Σ w_i · p_i` without renormalization.
fn weighted_sum(dists: &[ClassDistribution], weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; NUM_CLASSES];
    for (d, &w) in dists.iter().zip(weights) {
        for (o, p) in out.iter_mut().zip(d.probs()) {
            *o += w * p;
        }
    }
    out
}

/// Weighted pooling of member distributions, renormalized.
pub fn pool_weighted(dists: &[ClassDistribution], weights: &[f64]) -> ClassDistribution {
    ClassDistribution::renormalized(weighted_sum(dists, weights))
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Soft-vote prediction. In stochastic mode only dropout-capable members
/// sample (each with a seed derived from the pass seed and its position);
/// the rest predict deterministically.
pub fn ensemble_predict(ens: &Ensemble, vec: &FeatureVector, mode: PredictMode) -> Result<ClassDistribution, ClassifierError> {
    let dropout = match mode {
        PredictMode::Deterministic => None,
        PredictMode::Stochastic { seed } => Some((seed, None)),
    };
    Ok(pool_weighted(&ens.member_outputs(vec, dropout)?, &ens.weights))
}

impl ProbClassifier for Ensemble {
    fn dim(&self) -> usize {
        self.members[0].model.dim()
    }

    fn supports_dropout(&self) -> bool {
        self.members.iter().any(|m| m.model.supports_dropout())
    }

    fn predict_dropout(&self, vec: &FeatureVector, seed: u64, rate: f64) -> Result<ClassDistribution, ClassifierError> {
        if !self.supports_dropout() {
            return Err(ClassifierError::StochasticUnsupported);
        }
        Ok(pool_weighted(&self.member_outputs(vec, Some((seed, Some(rate))))?, &self.weights))
    }

    fn predict(&self, vec: &FeatureVector, mode: PredictMode) -> Result<ClassDistribution, ClassifierError> {
        ensemble_predict(self, vec, mode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[default]
    Accuracy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSearchConfig {
    pub grid_step: f64,
    #[serde(default)]
    pub objective: Objective,
}

impl WeightSearchConfig {
    /// 0.001 for up to two members, 0.01 beyond.
    pub fn for_members(n: usize) -> Self {
        Self {
            grid_step: if n <= 2 { 0.001 } else { 0.01 },
            objective: Objective::Accuracy,
        }
    }

    fn divisions(&self) -> Result<u32, EnsembleError> {
        let k = (1.0 / self.grid_step).round();
        if !(self.grid_step > 0.0 && self.grid_step <= 1.0) || (k * self.grid_step - 1.0).abs() > 1e-9 {
            return Err(EnsembleError::InvalidGridStep(self.grid_step));
        }
        Ok(k as u32)
    }
}

/// Integer compositions of `total` into `parts` parts, in lexicographically
/// descending order (all weight on the first member comes first).
pub fn simplex_grid(total: u32, parts: usize) -> Vec<Vec<u32>> {
    fn rec(remaining: u32, parts: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=remaining).rev() {
            prefix.push(first);
            rec(remaining - first, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts > 0 {
        rec(total, parts, &mut Vec::with_capacity(parts), &mut out);
    }
    out
}

/// Outcome of a weight search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub members: Vec<String>,
    pub weights: Vec<f64>,
    pub validation_accuracy: f64,
    /// Each member alone (the simplex corners), in member order.
    pub member_accuracies: Vec<f64>,
    pub grid_step: f64,
    pub grid_points: usize,
    pub validation_size: usize,
}

/// Exhaustive simplex-grid search maximizing validation accuracy. Member
/// predictions are computed once; the sweep only touches the cache. Among
/// equally accurate points the first in descending lexicographic order wins,
/// which favors earlier members.
pub fn tune_weights(
    members: Vec<Member>,
    cfg: &WeightSearchConfig,
    validation: &Dataset,
) -> Result<(Ensemble, TuningReport), EnsembleError> {
    if validation.is_empty() {
        return Err(EnsembleError::EmptyValidation);
    }
    let k = cfg.divisions()?;
    let probe = Ensemble::uniform(members)?;
    let m = probe.members.len();

    let cache: Vec<Vec<ClassDistribution>> = par::try_map(&validation.vectors, |v| probe.member_outputs(v, None))?;
    let grid = simplex_grid(k, m);
    let hits: Vec<usize> = par::map(&grid, |point| {
        let w: Vec<f64> = point.iter().map(|&c| c as f64 / k as f64).collect();
        cache
            .iter()
            .zip(&validation.labels)
            .filter(|(dists, &gold)| argmax(&weighted_sum(dists, &w)) == gold)
            .count()
    });
    let mut best = 0;
    for (i, &h) in hits.iter().enumerate() {
        if h > hits[best] {
            best = i;
        }
    }

    let n = validation.len() as f64;
    let member_accuracies = (0..m)
        .map(|j| {
            let correct = cache
                .iter()
                .zip(&validation.labels)
                .filter(|(dists, &gold)| dists[j].argmax_index() == gold)
                .count();
            correct as f64 / n
        })
        .collect();
    let weights: Vec<f64> = grid[best].iter().map(|&c| c as f64 / k as f64).collect();
    let ens = probe.reweighted(weights.clone())?;
    let report = TuningReport {
        members: ens.names().into_iter().map(String::from).collect(),
        weights,
        validation_accuracy: hits[best] as f64 / n,
        member_accuracies,
        grid_step: cfg.grid_step,
        grid_points: grid.len(),
        validation_size: validation.len(),
    };
    Ok((ens, report))
}

/// One row of the ensemble-weights table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRow {
    pub ensemble: String,
    pub train: String,
    pub test: String,
    pub weights: Vec<(String, f64)>,
    pub accuracy: f64,
}

/// Test-set accuracy of `ens` with its weights, as a table row.
pub fn ensemble_report(
    ens: &Ensemble,
    name: &str,
    train: &str,
    test_name: &str,
    test: &Dataset,
) -> Result<EnsembleRow, EnsembleError> {
    let accuracy = crate::classifiers::accuracy(ens, test)?;
    Ok(EnsembleRow {
        ensemble: name.to_string(),
        train: train.to_string(),
        test: test_name.to_string(),
        weights: ens.names().into_iter().map(String::from).zip(ens.weights.iter().copied()).collect(),
        accuracy,
    })
}

/// On-disk ensemble: member artifact references plus weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleArtifact {
    pub name: String,
    pub members: Vec<MemberRef>,
    pub weights: Vec<f64>,
    pub tuning: TuningMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRef {
    pub name: String,
    pub artifact: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningMetadata {
    pub grid_step: f64,
    pub validation_fingerprint: String,
    pub validation_accuracy: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::LogRegModel;
    use crate::corpus::GenreLabel;
    use proptest::prelude::*;

    /// Returns a fixed distribution per input, looked up by the value at index 0.
    struct Table(Vec<ClassDistribution>);

    impl ProbClassifier for Table {
        fn dim(&self) -> usize {
            1
        }
        fn supports_dropout(&self) -> bool {
            false
        }
        fn predict_dropout(&self, _: &FeatureVector, _: u64, _: f64) -> Result<ClassDistribution, ClassifierError> {
            Err(ClassifierError::StochasticUnsupported)
        }
        fn predict(&self, v: &FeatureVector, _: PredictMode) -> Result<ClassDistribution, ClassifierError> {
            Ok(self.0[v.get(0) as usize - 1].clone())
        }
    }

    fn dist(head: &[f64]) -> ClassDistribution {
        let mut p = head.to_vec();
        p.resize(NUM_CLASSES, 0.0);
        ClassDistribution::new(p).unwrap()
    }

    fn inputs(n: usize) -> Vec<FeatureVector> {
        (1..=n).map(|i| FeatureVector::from_dense(&[i as f64])).collect()
    }

    fn member(name: &str, t: Vec<ClassDistribution>) -> Member {
        Member::new(name, Arc::new(Table(t)))
    }

    #[test]
    fn corner_and_fixed_point() {
        let a = member("a", vec![dist(&[0.8, 0.2])]);
        let b = member("b", vec![dist(&[0.2, 0.8])]);
        let x = &inputs(1)[0];
        let e = Ensemble::new(vec![a.clone(), b.clone()], vec![1.0, 0.0]).unwrap();
        assert_eq!(ensemble_predict(&e, x, PredictMode::Deterministic).unwrap(), dist(&[0.8, 0.2]));
        let e = Ensemble::new(vec![a.clone(), b], vec![0.5, 0.5]).unwrap();
        let p = ensemble_predict(&e, x, PredictMode::Deterministic).unwrap();
        assert!((p.probs()[0] - 0.5).abs() < 1e-12 && (p.probs()[1] - 0.5).abs() < 1e-12);
        let same = Ensemble::new(vec![a.clone(), member("c", vec![dist(&[0.8, 0.2])])], vec![0.3, 0.7]).unwrap();
        let p = ensemble_predict(&same, x, PredictMode::Deterministic).unwrap();
        assert!((p.probs()[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn construction_errors() {
        let a = member("a", vec![dist(&[1.0])]);
        assert!(matches!(Ensemble::new(vec![], vec![]), Err(EnsembleError::NoMembers)));
        assert!(matches!(Ensemble::new(vec![a.clone()], vec![0.5]), Err(EnsembleError::InvalidWeights(_))));
        assert!(matches!(
            Ensemble::new(vec![a.clone(), a.clone()], vec![0.5, 0.5]),
            Err(EnsembleError::DuplicateName(_))
        ));
        let lr = Member::new("lr", Arc::new(LogRegModel::zeros(3)));
        assert!(matches!(Ensemble::new(vec![a, lr], vec![0.5, 0.5]), Err(EnsembleError::DimensionMismatch(1, 3))));
    }

    #[test]
    fn grid_enumeration() {
        assert_eq!(simplex_grid(2, 2), vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        let g = simplex_grid(100, 3);
        assert_eq!(g.len(), 5151);
        assert_eq!(g[0], vec![100, 0, 0]);
        assert!(g.contains(&vec![0, 100, 0]) && g.contains(&vec![0, 0, 100]));
        assert!(g.windows(2).all(|w| w[0] > w[1]));
        assert_eq!(simplex_grid(1000, 2).len(), 1001);
    }

    #[test]
    fn single_member_tuning() {
        let a = member("a", vec![dist(&[1.0]), dist(&[0.0, 1.0]), dist(&[1.0])]);
        let data = Dataset::new(inputs(3), &[GenreLabel::A1, GenreLabel::A1, GenreLabel::A1]).unwrap();
        let (e, rep) = tune_weights(vec![a], &WeightSearchConfig::for_members(1), &data).unwrap();
        assert_eq!(e.weights(), &[1.0]);
        assert!((rep.validation_accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(rep.member_accuracies, vec![rep.validation_accuracy]);
    }

    #[test]
    fn dominant_member_wins() {
        let gold = [GenreLabel::A1, GenreLabel::A4, GenreLabel::A1, GenreLabel::A4];
        let right: Vec<_> = gold.iter().map(|&g| ClassDistribution::one_hot(g)).collect();
        let wrong: Vec<_> = gold
            .iter()
            .map(|&g| ClassDistribution::one_hot(if g == GenreLabel::A1 { GenreLabel::A4 } else { GenreLabel::A1 }))
            .collect();
        let data = Dataset::new(inputs(4), &gold).unwrap();
        let (e, rep) = tune_weights(
            vec![member("wrong", wrong), member("right", right)],
            &WeightSearchConfig::for_members(2),
            &data,
        )
        .unwrap();
        assert_eq!(rep.validation_accuracy, 1.0);
        assert!(e.weights()[1] > 0.5);
        assert_eq!(rep.member_accuracies, vec![0.0, 1.0]);
        assert!(matches!(
            tune_weights(vec![member("a", vec![])], &WeightSearchConfig::for_members(1), &Dataset::new(vec![], &[]).unwrap()),
            Err(EnsembleError::EmptyValidation)
        ));
        let bad = WeightSearchConfig { grid_step: 0.3, objective: Objective::Accuracy };
        assert!(matches!(
            tune_weights(vec![member("a", vec![dist(&[1.0])])], &bad, &Dataset::new(inputs(1), &[GenreLabel::A1]).unwrap()),
            Err(EnsembleError::InvalidGridStep(_))
        ));
    }

    #[test]
    fn identical_members_report_identical_rows() {
        let t = vec![dist(&[0.6, 0.4]), dist(&[0.3, 0.7])];
        let data = Dataset::new(inputs(2), &[GenreLabel::A1, GenreLabel::A1]).unwrap();
        let mut accs = Vec::new();
        for w in [0.0, 0.25, 1.0] {
            let e = Ensemble::new(vec![member("a", t.clone()), member("b", t.clone())], vec![w, 1.0 - w]).unwrap();
            accs.push(ensemble_report(&e, "e", "tr", "te", &data).unwrap().accuracy);
        }
        assert!(accs.iter().all(|&a| a == 0.5));
    }

    fn arb_dist() -> impl Strategy<Value = ClassDistribution> {
        proptest::collection::vec(0.001f64..1.0, NUM_CLASSES).prop_map(|v| {
            let s: f64 = v.iter().sum();
            ClassDistribution::renormalized(v.into_iter().map(|x| x / s).collect())
        })
    }

    fn arb_weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, n).prop_map(|v| {
            let s: f64 = v.iter().sum::<f64>() + 1e-12;
            let mut w: Vec<f64> = v.iter().map(|x| x / s).collect();
            let rest: f64 = w[1..].iter().sum();
            w[0] = (1.0 - rest).max(0.0);
            w
        })
    }

    proptest! {
        #[test]
        fn affine_in_weights(d in proptest::collection::vec(arb_dist(), 3), w1 in arb_weights(3), w2 in arb_weights(3), lambda in 0.0f64..1.0) {
            let members: Vec<Member> = d.iter().enumerate().map(|(i, d)| member(&format!("m{i}"), vec![d.clone()])).collect();
            let x = &inputs(1)[0];
            let mix: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
            let p = |w: &[f64]| ensemble_predict(&Ensemble::new(members.clone(), w.to_vec()).unwrap(), x, PredictMode::Deterministic).unwrap();
            let (pm, p1, p2) = (p(&mix), p(&w1), p(&w2));
            for c in 0..NUM_CLASSES {
                let rhs = lambda * p1.probs()[c] + (1.0 - lambda) * p2.probs()[c];
                prop_assert!((pm.probs()[c] - rhs).abs() < 1e-9);
            }
            let sum: f64 = pm.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
        }

        #[test]
        fn permutation_invariant(d in proptest::collection::vec(arb_dist(), 3), w in arb_weights(3)) {
            let members: Vec<Member> = d.iter().enumerate().map(|(i, d)| member(&format!("m{i}"), vec![d.clone()])).collect();
            let x = &inputs(1)[0];
            let a = ensemble_predict(&Ensemble::new(members.clone(), w.clone()).unwrap(), x, PredictMode::Deterministic).unwrap();
            let perm = [2usize, 0, 1];
            let pm: Vec<Member> = perm.iter().map(|&i| members[i].clone()).collect();
            let pw: Vec<f64> = perm.iter().map(|&i| w[i]).collect();
            let b = ensemble_predict(&Ensemble::new(pm, pw).unwrap(), x, PredictMode::Deterministic).unwrap();
            for c in 0..NUM_CLASSES {
                prop_assert!((a.probs()[c] - b.probs()[c]).abs() < 1e-12);
            }
        }

        #[test]
        fn tuned_accuracy_dominates_members(table in proptest::collection::vec(proptest::collection::vec(arb_dist(), 12), 2..4), gold in proptest::collection::vec(0usize..NUM_CLASSES, 12)) {
            let members: Vec<Member> = table.iter().enumerate().map(|(i, t)| member(&format!("m{i}"), t.clone())).collect();
            let labels: Vec<GenreLabel> = gold.iter().map(|&g| GenreLabel::GENRES[g]).collect();
            let data = Dataset::new(inputs(12), &labels).unwrap();
            let cfg = WeightSearchConfig { grid_step: 0.05, objective: Objective::Accuracy };
            let (_, rep) = tune_weights(members, &cfg, &data).unwrap();
            for a in &rep.member_accuracies {
                prop_assert!(rep.validation_accuracy >= *a);
            }
            let s: f64 = rep.weights.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }
    }
}
