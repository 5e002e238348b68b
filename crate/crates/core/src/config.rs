//! Experiment configuration: a TOML file with the default hyperparameters,
//! plus dotted-key overrides from the command line.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::confidence::ConfidenceConfig;
use crate::features::{FeatureConfig, NGramRange, SelectionAggregation};
use crate::synthetic::SyntheticSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("bad override {0:?}: expected key.path=value")]
    BadOverride(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Classifiers the pipeline knows how to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierName {
    Lr,
    MlpA,
    MlpB,
    Ensemble2,
    Ensemble3,
}

impl ClassifierName {
    pub const ALL: [ClassifierName; 5] = [Self::Lr, Self::MlpA, Self::MlpB, Self::Ensemble2, Self::Ensemble3];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Lr => "lr",
            Self::MlpA => "mlp_a",
            Self::MlpB => "mlp_b",
            Self::Ensemble2 => "ensemble2",
            Self::Ensemble3 => "ensemble3",
        }
    }

    pub fn is_ensemble(self) -> bool {
        matches!(self, Self::Ensemble2 | Self::Ensemble3)
    }
}

impl fmt::Display for ClassifierName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    /// Used only when no test paths are given: each training corpus is
    /// split into train/test with this fraction.
    pub train_fraction: f64,
    pub seed: u64,
    /// Share of each training corpus held out for ensemble tuning and
    /// epoch sweeps.
    pub validation_fraction: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            train_fraction: 0.75,
            seed: 0,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    pub word_k: usize,
    pub char_k: usize,
    pub n_min: u8,
    pub n_max: u8,
    pub max_tokens: usize,
    pub aggregation: SelectionAggregation,
}

impl Default for FeatureSection {
    fn default() -> Self {
        let f = FeatureConfig::default();
        Self {
            word_k: f.word_k,
            char_k: f.char_k,
            n_min: f.n_range.min,
            n_max: f.n_range.max,
            max_tokens: 512,
            aggregation: f.aggregation,
        }
    }
}

impl FeatureSection {
    pub fn feature_config(&self) -> Result<FeatureConfig, ConfigError> {
        let n_range = NGramRange::new(self.n_min, self.n_max).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(FeatureConfig {
            word_k: self.word_k,
            char_k: self.char_k,
            n_range,
            aggregation: self.aggregation,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegSection {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for LogRegSection {
    fn default() -> Self {
        let t = crate::classifiers::TrainConfig::logreg();
        Self {
            lr: t.lr,
            batch_size: t.batch_size,
            epochs: t.epochs,
            l2: t.l2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSection {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub hidden: usize,
    pub dropout_p: f64,
    /// Streams mixed into the run seed for the two surrogates.
    pub member_streams: [u64; 2],
}

impl Default for MlpSection {
    fn default() -> Self {
        let t = crate::classifiers::TrainConfig::mlp();
        Self {
            lr: t.lr,
            batch_size: t.batch_size,
            epochs: t.epochs,
            hidden: t.hidden,
            dropout_p: t.dropout_p,
            member_streams: [1, 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub grid_step_two: f64,
    pub grid_step_three: f64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            grid_step_two: 0.001,
            grid_step_three: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub top_confusions: usize,
    pub rejection_step: f64,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            top_confusions: 5,
            rejection_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveSection {
    pub fractions: Vec<f64>,
    pub classifier: ClassifierName,
}

impl Default for CurveSection {
    fn default() -> Self {
        Self {
            fractions: vec![0.1, 0.25, 0.5, 0.75, 1.0],
            classifier: ClassifierName::Lr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub max_epochs: usize,
    pub classifier: ClassifierName,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            max_epochs: 20,
            classifier: ClassifierName::MlpA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub train_paths: Vec<PathBuf>,
    pub test_paths: Vec<PathBuf>,
    /// Corpora without gold labels whose predicted-genre distribution is tabulated.
    pub unlabeled_paths: Vec<PathBuf>,
    /// Also train on the concatenation of all training corpora.
    pub concat_train: bool,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub classifiers: Vec<ClassifierName>,
    pub split: SplitSection,
    pub features: FeatureSection,
    pub logreg: LogRegSection,
    pub mlp: MlpSection,
    pub ensemble: EnsembleSection,
    pub confidence: ConfidenceConfig,
    pub report: ReportSection,
    pub learning_curve: CurveSection,
    pub epoch_sweep: SweepSection,
    pub synthetic: SyntheticSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train_paths: Vec::new(),
            test_paths: Vec::new(),
            unlabeled_paths: Vec::new(),
            concat_train: false,
            output_dir: PathBuf::from("out"),
            seeds: vec![0],
            classifiers: ClassifierName::ALL.to_vec(),
            split: SplitSection::default(),
            features: FeatureSection::default(),
            logreg: LogRegSection::default(),
            mlp: MlpSection::default(),
            ensemble: EnsembleSection::default(),
            confidence: ConfidenceConfig::default(),
            report: ReportSection::default(),
            learning_curve: CurveSection::default(),
            epoch_sweep: SweepSection::default(),
            synthetic: SyntheticSpec::default(),
        }
    }
}

/// Parses the right-hand side of an override as a TOML value, falling back
/// to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(root: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigError::BadOverride(spec.to_string()))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::BadOverride(spec.to_string()));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| ConfigError::BadOverride(spec.to_string()))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl ExperimentConfig {
    /// Parses TOML text, applies `key.path=value` overrides, and resolves
    /// relative paths against `base`.
    pub fn from_toml_str(text: &str, overrides: &[String], base: &Path) -> Result<Self, ConfigError> {
        let mut root: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        let mut cfg: Self = root.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    /// Loads `path` (or defaults when `None`), then applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                let base = p.parent().filter(|b| !b.as_os_str().is_empty()).unwrap_or(Path::new("."));
                Self::from_toml_str(&text, overrides, base)
            }
            None => Self::from_toml_str("", overrides, Path::new(".")),
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.train_paths.iter_mut().for_each(fix);
        self.test_paths.iter_mut().for_each(fix);
        self.unlabeled_paths.iter_mut().for_each(fix);
        fix(&mut self.output_dir);
    }

    /// Checks the invariants every data-consuming command relies on.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.train_paths.is_empty() {
            return bad("at least one train path is required".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty".into());
        }
        if self.classifiers.is_empty() {
            return bad("classifiers must be non-empty".into());
        }
        for (name, f) in [
            ("split.train_fraction", self.split.train_fraction),
            ("split.validation_fraction", self.split.validation_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return bad(format!("{name} must lie in (0,1), got {f}"));
            }
        }
        self.features.feature_config()?;
        if self.features.max_tokens == 0 {
            return bad("features.max_tokens must be positive".into());
        }
        if self.confidence.n_samples == 0 {
            return bad("confidence.n_samples must be positive".into());
        }
        if !(0.0..1.0).contains(&self.confidence.dropout_p) || !(0.0..1.0).contains(&self.mlp.dropout_p) {
            return bad("dropout probabilities must lie in [0,1)".into());
        }
        if !(self.report.rejection_step > 0.0 && self.report.rejection_step <= 1.0) {
            return bad("report.rejection_step must lie in (0,1]".into());
        }
        if self.epoch_sweep.max_epochs == 0 {
            return bad("epoch_sweep.max_epochs must be positive".into());
        }
        if self.epoch_sweep.classifier.is_ensemble() || self.learning_curve.classifier.is_ensemble() {
            return bad("curves and sweeps take a single classifier (lr, mlp_a, mlp_b)".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
