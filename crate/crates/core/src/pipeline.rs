//! End-to-end plumbing shared by the command-line tool and the tests:
//! corpus loading, validation carving, feature fitting, member training
//! with an on-disk model cache, and ensemble tuning.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifiers::{
    load_model, save_model, train_logreg, train_logreg_traced, train_mlp, train_mlp_traced, ClassifierError, Dataset,
    EpochRecord, ProbClassifier, TrainConfig, TrainedModel,
};
use crate::config::{ClassifierName, ConfigError, ExperimentConfig};
use crate::confidence::ConfidenceError;
use crate::corpus::{concat, load_corpus, split, truncate_head, Corpus, CorpusError, CorpusFormat, SplitSpec};
use crate::ensemble::{tune_weights, Ensemble, EnsembleError, Member, TuningReport, WeightSearchConfig};
use crate::features::{fit_feature_space, vectorize_corpus, FeatureError, FeatureSpace, FeatureVector};
use crate::stats::StatsError;
use crate::synthetic::SyntheticError;
use crate::{par, rng};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Confidence(#[from] ConfidenceError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Data(String),
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 1 usage/config, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        fn classifier(e: &ClassifierError) -> i32 {
            match e {
                ClassifierError::NonFiniteLoss { .. } | ClassifierError::InvalidDistribution(_) => 3,
                ClassifierError::InvalidConfig(_) => 1,
                _ => 2,
            }
        }
        match self {
            Self::Config(_) => 1,
            Self::Synthetic(SyntheticError::InvalidSpec(_)) => 1,
            Self::Classifier(e) => classifier(e),
            Self::Ensemble(EnsembleError::Classifier(e)) => classifier(e),
            Self::Ensemble(EnsembleError::InvalidGridStep(_)) => 1,
            Self::Confidence(ConfidenceError::Classifier(e)) => classifier(e),
            Self::Stats(StatsError::Classifier(e)) => classifier(e),
            Self::Stats(StatsError::Corpus(_)) => 2,
            Self::Stats(_) | Self::Confidence(_) => 3,
            _ => 2,
        }
    }
}

/// File stem of a corpus path, used as its display name.
pub fn corpus_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn load_truncated(path: &Path, max_tokens: usize) -> Result<Corpus, PipelineError> {
    let c = load_corpus(path, CorpusFormat::from_path(path))?;
    if c.is_empty() {
        return Err(CorpusError::EmptyCorpus.into());
    }
    Ok(c.map_documents(|d| truncate_head(d, max_tokens)))
}

#[derive(Debug, Clone)]
pub struct NamedCorpus {
    pub name: String,
    pub corpus: Corpus,
}

/// A training corpus after validation carving and feature fitting.
#[derive(Debug, Clone)]
pub struct TrainSet {
    pub name: String,
    pub fit: Corpus,
    pub validation: Corpus,
    pub space: Arc<FeatureSpace>,
    pub train: Dataset,
    pub val: Dataset,
}

impl TrainSet {
    /// Holds out a stratified validation share, then fits the feature
    /// space on the remainder only.
    pub fn prepare(name: &str, corpus: &Corpus, cfg: &ExperimentConfig) -> Result<Self, PipelineError> {
        let spec = SplitSpec {
            train_fraction: 1.0 - cfg.split.validation_fraction,
            seed: cfg.split.seed,
            stratified: true,
        };
        let (fit, validation) = split(corpus, &spec)?;
        if validation.is_empty() {
            return Err(EnsembleError::EmptyValidation.into());
        }
        let space = fit_feature_space(&fit, &cfg.features.feature_config()?)?;
        let train = Dataset::from_corpus(&fit, &space)?;
        let val = Dataset::from_corpus(&validation, &space)?;
        Ok(Self {
            name: name.to_string(),
            fit,
            validation,
            space: Arc::new(space),
            train,
            val,
        })
    }

    pub fn vectorize(&self, corpus: &Corpus) -> Vec<FeatureVector> {
        vectorize_corpus(corpus, &self.space)
    }

    pub fn dataset(&self, corpus: &Corpus) -> Result<Dataset, PipelineError> {
        Ok(Dataset::from_corpus(corpus, &self.space)?)
    }
}

/// Everything a command needs from the data side.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub train_sets: Vec<TrainSet>,
    pub tests: Vec<NamedCorpus>,
    pub unlabeled: Vec<NamedCorpus>,
    /// (train set index, test index) combinations to evaluate.
    pub pairs: Vec<(usize, usize)>,
}

impl ExperimentData {
    /// Loads and truncates every corpus. Without test paths each training
    /// corpus is split and paired only with its own held-out part; with
    /// test paths every training set meets every test corpus.
    pub fn load(cfg: &ExperimentConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let max = cfg.features.max_tokens;
        let mut trains = Vec::new();
        let mut tests = Vec::new();
        for p in &cfg.train_paths {
            let name = corpus_name(p);
            let c = load_truncated(p, max)?;
            if cfg.test_paths.is_empty() {
                let spec = SplitSpec {
                    train_fraction: cfg.split.train_fraction,
                    seed: cfg.split.seed,
                    stratified: true,
                };
                let (tr, te) = split(&c, &spec)?;
                trains.push(NamedCorpus { name: name.clone(), corpus: tr });
                tests.push(NamedCorpus { name, corpus: te });
            } else {
                trains.push(NamedCorpus { name, corpus: c });
            }
        }
        for p in &cfg.test_paths {
            tests.push(NamedCorpus {
                name: corpus_name(p),
                corpus: load_truncated(p, max)?,
            });
        }
        let own_split = cfg.test_paths.is_empty();
        let mut pairs: Vec<(usize, usize)> = if own_split {
            (0..trains.len()).map(|i| (i, i)).collect()
        } else {
            (0..trains.len()).flat_map(|i| (0..tests.len()).map(move |j| (i, j))).collect()
        };
        if cfg.concat_train && trains.len() > 1 {
            let name = trains.iter().map(|t| t.name.as_str()).collect::<Vec<_>>().join("+");
            let parts: Vec<Corpus> = trains.iter().map(|t| t.corpus.with_id_prefix(&t.name)).collect();
            let idx = trains.len();
            trains.push(NamedCorpus { name, corpus: concat(&parts)? });
            pairs.extend((0..tests.len()).map(|j| (idx, j)));
        }
        let train_sets = trains
            .iter()
            .map(|t| TrainSet::prepare(&t.name, &t.corpus, cfg))
            .collect::<Result<Vec<_>, _>>()?;
        let unlabeled = cfg
            .unlabeled_paths
            .iter()
            .map(|p| {
                Ok(NamedCorpus {
                    name: corpus_name(p),
                    corpus: load_truncated(p, max)?,
                })
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        Ok(Self {
            train_sets,
            tests,
            unlabeled,
            pairs,
        })
    }
}

/// Training configuration of a single (non-ensemble) member for a run seed.
pub fn member_config(cfg: &ExperimentConfig, name: ClassifierName, seed: u64) -> TrainConfig {
    match name {
        ClassifierName::Lr => TrainConfig {
            lr: cfg.logreg.lr,
            batch_size: cfg.logreg.batch_size,
            epochs: cfg.logreg.epochs,
            seed,
            l2: cfg.logreg.l2,
            ..TrainConfig::logreg()
        },
        ClassifierName::MlpA | ClassifierName::MlpB => {
            let stream = cfg.mlp.member_streams[usize::from(name == ClassifierName::MlpB)];
            TrainConfig {
                lr: cfg.mlp.lr,
                batch_size: cfg.mlp.batch_size,
                epochs: cfg.mlp.epochs,
                seed: rng::mix(seed, stream),
                l2: 0.0,
                hidden: cfg.mlp.hidden,
                dropout_p: cfg.mlp.dropout_p,
            }
        }
        ClassifierName::Ensemble2 | ClassifierName::Ensemble3 => unreachable!("ensembles are tuned, not trained"),
    }
}

/// Trains one member, optionally tracing validation accuracy per epoch.
pub fn train_member_traced(
    set: &TrainSet,
    name: ClassifierName,
    tc: &TrainConfig,
    val: Option<&Dataset>,
) -> Result<(TrainedModel, Vec<EpochRecord>), PipelineError> {
    Ok(match name {
        ClassifierName::Lr => {
            let (m, trace) = train_logreg_traced(&set.train, val, tc)?;
            (TrainedModel::LogReg(m), trace)
        }
        ClassifierName::MlpA | ClassifierName::MlpB => {
            let (m, trace) = train_mlp_traced(&set.train, val, tc)?;
            (TrainedModel::Mlp(m), trace)
        }
        _ => unreachable!("ensembles are tuned, not trained"),
    })
}

pub fn train_member(
    set: &TrainSet,
    cfg: &ExperimentConfig,
    name: ClassifierName,
    seed: u64,
) -> Result<TrainedModel, PipelineError> {
    let tc = member_config(cfg, name, seed);
    Ok(match name {
        ClassifierName::Lr => TrainedModel::LogReg(train_logreg(&set.train, &tc)?),
        _ => TrainedModel::Mlp(train_mlp(&set.train, &tc)?),
    })
}

const MEMBERS: [ClassifierName; 3] = [ClassifierName::Lr, ClassifierName::MlpA, ClassifierName::MlpB];

/// The three trained members of one run seed plus the tuned ensembles.
#[derive(Clone)]
pub struct SeedModels {
    pub seed: u64,
    pub lr: Arc<TrainedModel>,
    pub mlp_a: Arc<TrainedModel>,
    pub mlp_b: Arc<TrainedModel>,
    pub ensemble2: Ensemble,
    pub ensemble3: Ensemble,
    pub tuning2: TuningReport,
    pub tuning3: TuningReport,
}

impl SeedModels {
    pub fn member(&self, name: ClassifierName) -> Arc<TrainedModel> {
        match name {
            ClassifierName::Lr => self.lr.clone(),
            ClassifierName::MlpA => self.mlp_a.clone(),
            ClassifierName::MlpB => self.mlp_b.clone(),
            _ => panic!("{name} is not a single model"),
        }
    }

    pub fn classifier(&self, name: ClassifierName) -> Arc<dyn ProbClassifier> {
        match name {
            ClassifierName::Ensemble2 => Arc::new(self.ensemble2.clone()),
            ClassifierName::Ensemble3 => Arc::new(self.ensemble3.clone()),
            other => self.member(other),
        }
    }
}

/// Tunes ensemble2 (the two surrogates) and ensemble3 (surrogates plus
/// logistic regression) on the validation split.
pub fn tune_ensembles(
    set: &TrainSet,
    cfg: &ExperimentConfig,
    seed: u64,
    lr: Arc<TrainedModel>,
    mlp_a: Arc<TrainedModel>,
    mlp_b: Arc<TrainedModel>,
) -> Result<SeedModels, PipelineError> {
    let m = |n: ClassifierName, model: &Arc<TrainedModel>| Member::new(n.as_str(), model.clone() as Arc<dyn ProbClassifier>);
    let step = |s: f64| WeightSearchConfig {
        grid_step: s,
        ..WeightSearchConfig::for_members(2)
    };
    let (ensemble2, tuning2) = tune_weights(
        vec![m(ClassifierName::MlpA, &mlp_a), m(ClassifierName::MlpB, &mlp_b)],
        &step(cfg.ensemble.grid_step_two),
        &set.val,
    )?;
    let (ensemble3, tuning3) = tune_weights(
        vec![
            m(ClassifierName::MlpA, &mlp_a),
            m(ClassifierName::MlpB, &mlp_b),
            m(ClassifierName::Lr, &lr),
        ],
        &step(cfg.ensemble.grid_step_three),
        &set.val,
    )?;
    Ok(SeedModels {
        seed,
        lr,
        mlp_a,
        mlp_b,
        ensemble2,
        ensemble3,
        tuning2,
        tuning3,
    })
}

/// Model artifacts under `<output_dir>/models`, keyed by everything that
/// influences training so stale artifacts are never reused.
pub struct ModelStore {
    root: PathBuf,
}

impl ModelStore {
    pub fn new(output_dir: &Path) -> Self {
        Self {
            root: output_dir.join("models"),
        }
    }

    pub fn set_dir(&self, set: &TrainSet, cfg: &ExperimentConfig) -> PathBuf {
        let key = serde_json::json!({
            "fit": set.fit.fingerprint(),
            "space": set.space.fingerprint(),
            "logreg": cfg.logreg,
            "mlp": cfg.mlp,
        });
        let digest = hex::encode(Sha256::digest(key.to_string().as_bytes()));
        self.root.join(&set.name).join(&digest[..16])
    }

    pub fn member_path(&self, set: &TrainSet, cfg: &ExperimentConfig, seed: u64, name: ClassifierName) -> PathBuf {
        self.set_dir(set, cfg).join(format!("seed-{seed}")).join(format!("{name}.json"))
    }

    /// Loads the member if a matching artifact exists, otherwise trains
    /// and saves it. Returns whether it was trained.
    fn member(
        &self,
        set: &TrainSet,
        cfg: &ExperimentConfig,
        seed: u64,
        name: ClassifierName,
    ) -> Result<(TrainedModel, bool), PipelineError> {
        let path = self.member_path(set, cfg, seed, name);
        if path.exists() {
            if let Ok(m) = load_model(&path, &set.space) {
                return Ok((m, false));
            }
        }
        let model = train_member(set, cfg, name, seed)?;
        let dir = path.parent().expect("member path has a parent");
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        save_model(&model, &set.space, &path)?;
        Ok((model, true))
    }

    /// Members and tuned ensembles for every seed; members of all seeds
    /// are trained concurrently.
    pub fn models(&self, set: &TrainSet, cfg: &ExperimentConfig) -> Result<Vec<SeedModels>, PipelineError> {
        let space_path = self.set_dir(set, cfg).join("features.json");
        if let Some(dir) = space_path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        }
        std::fs::write(&space_path, set.space.to_json()).map_err(|e| PipelineError::io(&space_path, e))?;

        let jobs: Vec<(u64, ClassifierName)> = cfg
            .seeds
            .iter()
            .flat_map(|&s| MEMBERS.iter().map(move |&n| (s, n)))
            .collect();
        let trained = par::try_map(&jobs, |&(seed, name)| self.member(set, cfg, seed, name))?;
        let mut it = trained.into_iter().map(|(m, _)| Arc::new(m));
        cfg.seeds
            .iter()
            .map(|&seed| {
                let (lr, a, b) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
                tune_ensembles(set, cfg, seed, lr, a, b)
            })
            .collect()
    }
}
