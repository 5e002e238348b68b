use std::fmt;

use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Correct,
    Wrong,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::Correct => "correct",
            Group::Wrong => "wrong",
        })
    }
}

/// Normalized Mann-Whitney statistic: the probability (ties counting half)
/// that a correct prediction is more confident than a wrong one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MwuResult {
    pub stat: f64,
    pub delta: f64,
    pub n_correct: usize,
    pub n_wrong: usize,
}

impl MwuResult {
    /// Raw U of the correct group.
    pub fn u(&self) -> f64 {
        self.stat * (self.n_correct * self.n_wrong) as f64
    }
}

/// U/(n1·n2) via midranks over the pooled sample.
pub fn mann_whitney(correct: &[f64], wrong: &[f64]) -> Result<MwuResult, StatsError> {
    if correct.is_empty() {
        return Err(StatsError::EmptyGroup(Group::Correct));
    }
    if wrong.is_empty() {
        return Err(StatsError::EmptyGroup(Group::Wrong));
    }
    let (n1, n2) = (correct.len(), wrong.len());
    let mut pooled: Vec<(f64, bool)> = correct
        .iter()
        .map(|&v| (v, true))
        .chain(wrong.iter().map(|&v| (v, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Sum of midranks of the correct group. Midranks are multiples of 1/2,
    // so the sum is exact in f64 for any realistic sample size.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let midrank = (i + j + 2) as f64 / 2.0;
        rank_sum += midrank * pooled[i..=j].iter().filter(|p| p.1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(MwuResult {
        stat: u / (n1 * n2) as f64,
        delta: mean(correct) - mean(wrong),
        n_correct: n1,
        n_wrong: n2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquaredResult {
    pub statistic: f64,
    pub dof: usize,
    /// One entry per input category; dropped (all-zero) categories hold 0.
    pub per_category_contribution: Vec<f64>,
}

/// Two-sample homogeneity statistic over category counts. Categories with
/// zero combined count are dropped before computing, and `dof` reflects
/// only the kept ones.
pub fn chi_squared_two_samples(a: &[u64], b: &[u64]) -> Result<ChiSquaredResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let (ta, tb): (u64, u64) = (a.iter().sum(), b.iter().sum());
    if ta == 0 || tb == 0 {
        return Err(StatsError::AllZero);
    }
    let kept = a.iter().zip(b).filter(|(x, y)| **x + **y > 0).count();
    if kept < 2 {
        return Err(StatsError::TooFewCategories);
    }
    let grand = (ta + tb) as f64;
    let contributions: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let row = (x + y) as f64;
            if row == 0.0 {
                return 0.0;
            }
            let cell = |obs: u64, col: u64| {
                let exp = row * col as f64 / grand;
                (obs as f64 - exp).powi(2) / exp
            };
            cell(x, ta) + cell(y, tb)
        })
        .collect();
    Ok(ChiSquaredResult {
        statistic: contributions.iter().sum(),
        dof: kept - 1,
        per_category_contribution: contributions,
    })
}
