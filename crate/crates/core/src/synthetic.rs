//! Seeded cluster corpora for desk-scale experiments.
//!
//! Every class owns a private vocabulary of pseudo-words; all classes also
//! share a common pool. Each token of a document comes from the shared pool
//! with probability `overlap`, otherwise from the class vocabulary. Both
//! vocabularies are drawn Zipf-weighted so that a few words per class recur
//! often enough to form stable n-grams.

use std::collections::HashSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, Document, GenreLabel, NUM_CLASSES};
use crate::rng;

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "kr", "tr", "st",
];
const NUCLEI: &[&str] = &["a", "e", "i", "o", "u", "ya", "ou"];

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub docs_per_class: usize,
    pub vocab_per_class: usize,
    /// Probability that a token comes from the shared pool.
    pub overlap: f64,
    /// Inclusive token-count bounds.
    pub doc_length_range: (usize, usize),
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_classes: NUM_CLASSES,
            docs_per_class: 200,
            vocab_per_class: 1000,
            overlap: 0.3,
            doc_length_range: (4, 20),
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |m: &str| Err(SyntheticError::InvalidSpec(m.to_string()));
        if self.n_classes == 0 || self.n_classes > NUM_CLASSES {
            return bad("n_classes must be in 1..=10");
        }
        if self.vocab_per_class == 0 {
            return bad("vocab_per_class must be positive");
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return bad("overlap must lie in [0, 1)");
        }
        let (lo, hi) = self.doc_length_range;
        if lo == 0 || lo > hi {
            return bad("doc_length_range must satisfy 1 <= min <= max");
        }
        Ok(())
    }
}

fn pseudo_word<R: Rng>(rng: &mut R) -> String {
    let syllables = rng.gen_range(2..=4);
    (0..syllables)
        .map(|_| {
            let o = ONSETS[rng.gen_range(0..ONSETS.len())];
            let n = NUCLEI[rng.gen_range(0..NUCLEI.len())];
            format!("{o}{n}")
        })
        .collect()
}

/// `count` distinct words not already in `taken`.
fn vocabulary<R: Rng>(rng: &mut R, count: usize, taken: &mut HashSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let w = pseudo_word(rng);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn zipf(n: usize) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|r| 1.0 / r as f64)).expect("non-empty vocabulary")
}

/// Generates the corpus. Output depends only on the spec.
pub fn generate(spec: &SyntheticSpec) -> Result<Corpus, SyntheticError> {
    spec.validate()?;
    let mut vocab_rng = rng::child(spec.seed, 0);
    let mut taken = HashSet::new();
    let shared = vocabulary(&mut vocab_rng, spec.vocab_per_class, &mut taken);
    let classes: Vec<Vec<String>> = (0..spec.n_classes)
        .map(|_| vocabulary(&mut vocab_rng, spec.vocab_per_class, &mut taken))
        .collect();
    let pick = zipf(spec.vocab_per_class);

    let mut docs = Vec::with_capacity(spec.n_classes * spec.docs_per_class);
    for (c, own) in classes.iter().enumerate() {
        let label = GenreLabel::GENRES[c];
        let mut r = rng::child(spec.seed, 1 + c as u64);
        for i in 0..spec.docs_per_class {
            let len = r.gen_range(spec.doc_length_range.0..=spec.doc_length_range.1);
            let tokens: Vec<&str> = (0..len)
                .map(|_| {
                    let pool = if r.gen_bool(spec.overlap) { &shared } else { own };
                    pool[pick.sample(&mut r)].as_str()
                })
                .collect();
            let text = format!("{}.", tokens.join(" "));
            docs.push(Document::new(format!("syn-{}-{i:04}", label.code()), &text, Some(label))?);
        }
    }
    Ok(Corpus::new(docs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{split, SplitSpec};
    use std::collections::HashMap;

    fn small(overlap: f64) -> SyntheticSpec {
        SyntheticSpec {
            docs_per_class: 20,
            vocab_per_class: 50,
            overlap,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = generate(&small(0.3)).unwrap();
        let b = generate(&small(0.3)).unwrap();
        assert_eq!(a, b);
        let c = generate(&SyntheticSpec { seed: 8, ..small(0.3) }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn shape() {
        let c = generate(&small(0.3)).unwrap();
        assert_eq!(c.len(), 200);
        assert!(c.label_counts().values().all(|&n| n == 20));
        for d in c.iter() {
            let n = d.text.split_whitespace().count();
            assert!((4..=20).contains(&n));
        }
        let empty = generate(&SyntheticSpec { docs_per_class: 0, ..small(0.3) }).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn rejects_bad_spec() {
        assert!(generate(&SyntheticSpec { overlap: 1.0, ..small(0.0) }).is_err());
        assert!(generate(&SyntheticSpec { n_classes: 11, ..small(0.0) }).is_err());
        assert!(generate(&SyntheticSpec { doc_length_range: (5, 2), ..small(0.0) }).is_err());
    }

    fn bag(text: &str) -> HashMap<&str, f64> {
        let mut m = HashMap::new();
        for t in text.trim_end_matches('.').split_whitespace() {
            *m.entry(t).or_insert(0.0) += 1.0;
        }
        m
    }

    #[test]
    fn disjoint_vocabularies_give_perfect_nearest_centroid() {
        let corpus = generate(&small(0.0)).unwrap();
        let (train, test) = split(&corpus, &SplitSpec::new(0.75, 3)).unwrap();
        let mut centroids: HashMap<GenreLabel, HashMap<&str, f64>> = HashMap::new();
        for d in train.iter() {
            let c = centroids.entry(d.label.unwrap()).or_default();
            for (w, n) in bag(&d.text) {
                *c.entry(w).or_insert(0.0) += n;
            }
        }
        let cosine = |a: &HashMap<&str, f64>, b: &HashMap<&str, f64>| {
            let dot: f64 = a.iter().map(|(w, x)| x * b.get(w).unwrap_or(&0.0)).sum();
            let n = |m: &HashMap<&str, f64>| m.values().map(|v| v * v).sum::<f64>().sqrt();
            dot / (n(a) * n(b))
        };
        for d in test.iter() {
            let b = bag(&d.text);
            let best = centroids
                .iter()
                .max_by(|x, y| cosine(&b, x.1).total_cmp(&cosine(&b, y.1)))
                .unwrap();
            assert_eq!(Some(*best.0), d.label);
        }
    }
}
