//! One function per subcommand. Each reads an [`ExperimentConfig`], writes
//! its reports under the output directory, and returns the report value.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::output::{f3, headers, opt3, pm, render_table, Outputs};
use crate::classifiers::{accuracy, Dataset, PredictMode};
use crate::confidence::{confidence_delta, confidence_records, rejection_sweep, split_by_correctness, ConfidenceRecord, SweepPoint};
use crate::config::{ClassifierName, ExperimentConfig};
use crate::corpus::{write_jsonl, Corpus, GenreLabel};
use crate::ensemble::{ensemble_report, EnsembleArtifact, MemberRef, TuningMetadata};
use crate::features::fit_feature_space;
use crate::pipeline::{member_config, train_member_traced, ExperimentData, ModelStore, PipelineError, SeedModels, TrainSet};
use crate::stats::{
    chi_squared_two_samples, epoch_sweep, learning_curve, mann_whitney, per_class_f1, predict_distribution, seed_ci,
    top_confusions, ChiSquaredResult, ConfusionMatrix, ConfusionPair, CurvePoint, EpochSweep, GenreDistribution,
    MetricWithCI,
};
use crate::synthetic::{generate, SyntheticSpec};

type Result<T> = std::result::Result<T, PipelineError>;

struct Loaded {
    data: ExperimentData,
    models: Vec<Vec<SeedModels>>,
}

fn record_inputs(cfg: &ExperimentConfig, out: &mut Outputs) {
    for p in cfg.train_paths.iter().chain(&cfg.test_paths).chain(&cfg.unlabeled_paths) {
        out.input(p);
    }
}

/// Loads data and obtains models for every training set, reusing cached
/// artifacts when they match.
fn load_all(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Loaded> {
    let data = ExperimentData::load(cfg)?;
    record_inputs(cfg, out);
    let store = ModelStore::new(&cfg.output_dir);
    let mut models = Vec::with_capacity(data.train_sets.len());
    for set in &data.train_sets {
        models.push(store.models(set, cfg)?);
        for &seed in &cfg.seeds {
            for name in [ClassifierName::Lr, ClassifierName::MlpA, ClassifierName::MlpB] {
                out.record(&store.member_path(set, cfg, seed, name));
            }
        }
    }
    Ok(Loaded { data, models })
}

fn rel(out: &Outputs, p: &Path) -> String {
    p.strip_prefix(&out.root).unwrap_or(p).display().to_string()
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub train: String,
    pub seed: u64,
    pub classifier: ClassifierName,
    pub validation_accuracy: f64,
    pub artifact: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub rows: Vec<TrainRow>,
}

pub fn cmd_train(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<TrainReport> {
    let loaded = load_all(cfg, out)?;
    let store = ModelStore::new(&cfg.output_dir);
    let mut rows = Vec::new();
    for (set, per_seed) in loaded.data.train_sets.iter().zip(&loaded.models) {
        for m in per_seed {
            for name in [ClassifierName::Lr, ClassifierName::MlpA, ClassifierName::MlpB] {
                rows.push(TrainRow {
                    train: set.name.clone(),
                    seed: m.seed,
                    classifier: name,
                    validation_accuracy: accuracy(m.member(name).as_ref(), &set.val)?,
                    artifact: rel(out, &store.member_path(set, cfg, m.seed, name)),
                });
            }
        }
    }
    let report = TrainReport { rows };
    out.write_json("train.json", &report)?;
    let table: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| vec![r.train.clone(), r.seed.to_string(), r.classifier.to_string(), f3(r.validation_accuracy)])
        .collect();
    out.write_text("train.txt", &render_table("Trained models", &headers(&["train", "seed", "classifier", "val acc"]), &table))?;
    Ok(report)
}

// -------------------------------------------------------- tune-ensemble

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRow {
    pub ensemble: ClassifierName,
    pub train: String,
    pub test: String,
    pub seed: u64,
    pub weights: Vec<(String, f64)>,
    pub validation_accuracy: f64,
    pub member_validation_accuracies: Vec<(String, f64)>,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub validation_fraction: f64,
    pub rows: Vec<TuneRow>,
}

pub fn cmd_tune_ensemble(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<TuneReport> {
    let loaded = load_all(cfg, out)?;
    let store = ModelStore::new(&cfg.output_dir);
    for (set, per_seed) in loaded.data.train_sets.iter().zip(&loaded.models) {
        for m in per_seed {
            for (name, ens, tuning) in [
                (ClassifierName::Ensemble2, &m.ensemble2, &m.tuning2),
                (ClassifierName::Ensemble3, &m.ensemble3, &m.tuning3),
            ] {
                let artifact = EnsembleArtifact {
                    name: name.to_string(),
                    members: ens
                        .names()
                        .iter()
                        .map(|n| MemberRef {
                            name: n.to_string(),
                            artifact: format!("{n}.json"),
                        })
                        .collect(),
                    weights: ens.weights().to_vec(),
                    tuning: TuningMetadata {
                        grid_step: tuning.grid_step,
                        validation_fingerprint: set.validation.fingerprint(),
                        validation_accuracy: tuning.validation_accuracy,
                    },
                };
                let path = store.member_path(set, cfg, m.seed, name);
                let r = path.strip_prefix(&out.root).map(Path::to_path_buf).unwrap_or(path);
                out.write_json(r, &artifact)?;
            }
        }
    }

    let mut rows = Vec::new();
    for &(ti, tj) in &loaded.data.pairs {
        let set = &loaded.data.train_sets[ti];
        let test = &loaded.data.tests[tj];
        let ds = set.dataset(&test.corpus)?;
        for m in &loaded.models[ti] {
            for (name, ens, tuning) in [
                (ClassifierName::Ensemble2, &m.ensemble2, &m.tuning2),
                (ClassifierName::Ensemble3, &m.ensemble3, &m.tuning3),
            ] {
                let row = ensemble_report(ens, name.as_str(), &set.name, &test.name, &ds)?;
                rows.push(TuneRow {
                    ensemble: name,
                    train: set.name.clone(),
                    test: test.name.clone(),
                    seed: m.seed,
                    weights: row.weights,
                    validation_accuracy: tuning.validation_accuracy,
                    member_validation_accuracies: tuning.members.iter().cloned().zip(tuning.member_accuracies.iter().copied()).collect(),
                    test_accuracy: row.accuracy,
                });
            }
        }
    }
    let report = TuneReport {
        validation_fraction: cfg.split.validation_fraction,
        rows,
    };
    out.write_json("tune_ensemble.json", &report)?;
    let table: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let w = r.weights.iter().map(|(n, w)| format!("{n}={w:.3}")).collect::<Vec<_>>().join(" ");
            vec![
                r.ensemble.to_string(),
                r.train.clone(),
                r.test.clone(),
                r.seed.to_string(),
                w,
                f3(r.validation_accuracy),
                f3(r.test_accuracy),
            ]
        })
        .collect();
    out.write_text(
        "tune_ensemble.txt",
        &render_table(
            "Ensemble weights",
            &headers(&["ensemble", "train", "test", "seed", "weights", "val acc", "test acc"]),
            &table,
        ),
    )?;
    Ok(report)
}

// ------------------------------------------------------------- evaluate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEval {
    pub classifier: ClassifierName,
    pub accuracy: MetricWithCI,
    pub per_seed_accuracy: Vec<f64>,
    pub per_class_f1: BTreeMap<GenreLabel, MetricWithCI>,
    /// Summed over seeds.
    pub confusion: ConfusionMatrix,
    pub top_confusions: Vec<ConfusionPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSection {
    pub train: String,
    pub test: String,
    pub n_test: usize,
    pub classifiers: Vec<ClassifierEval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSection {
    pub train: String,
    pub corpus: String,
    pub classifier: ClassifierName,
    pub seed: u64,
    pub distribution: GenreDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateReport {
    pub seeds: Vec<u64>,
    pub sections: Vec<EvalSection>,
    pub distributions: Vec<DistributionSection>,
}

fn evaluate_classifier(name: ClassifierName, models: &[SeedModels], ds: &Dataset, top_k: usize) -> Result<ClassifierEval> {
    let mut total = ConfusionMatrix::new();
    let mut accs = Vec::new();
    let mut f1s: BTreeMap<GenreLabel, Vec<f64>> = BTreeMap::new();
    for m in models {
        let clf = m.classifier(name);
        let preds = crate::par::try_map(&ds.vectors, |v| clf.predict(v, PredictMode::Deterministic).map(|d| d.argmax_label()))?;
        let cm = ConfusionMatrix::from_pairs(ds.gold().zip(preds));
        let f1 = per_class_f1(&cm)?;
        accs.push(f1.accuracy);
        for (g, v) in f1.per_class {
            f1s.entry(g).or_default().push(v);
        }
        for (g, row) in cm.counts().iter().enumerate() {
            for (p, &c) in row.iter().enumerate() {
                total.add(GenreLabel::GENRES[g], GenreLabel::GENRES[p], c);
            }
        }
    }
    Ok(ClassifierEval {
        classifier: name,
        accuracy: seed_ci(&accs)?,
        per_seed_accuracy: accs,
        per_class_f1: f1s.into_iter().map(|(g, v)| Ok((g, seed_ci(&v)?))).collect::<Result<_>>()?,
        top_confusions: top_confusions(&total, top_k),
        confusion: total,
    })
}

fn distribution_file(d: &DistributionSection) -> String {
    format!("distributions/{}__{}__{}.csv", d.train, d.corpus, d.classifier)
}

pub fn cmd_evaluate(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<EvaluateReport> {
    let loaded = load_all(cfg, out)?;
    let mut sections = Vec::new();
    for &(ti, tj) in &loaded.data.pairs {
        let set = &loaded.data.train_sets[ti];
        let test = &loaded.data.tests[tj];
        let ds = set.dataset(&test.corpus)?;
        let classifiers = cfg
            .classifiers
            .iter()
            .map(|&c| evaluate_classifier(c, &loaded.models[ti], &ds, cfg.report.top_confusions))
            .collect::<Result<Vec<_>>>()?;
        sections.push(EvalSection {
            train: set.name.clone(),
            test: test.name.clone(),
            n_test: ds.len(),
            classifiers,
        });
    }

    let mut distributions = Vec::new();
    for (set, models) in loaded.data.train_sets.iter().zip(&loaded.models) {
        for u in &loaded.data.unlabeled {
            let vecs = set.vectorize(&u.corpus);
            for &c in &cfg.classifiers {
                distributions.push(DistributionSection {
                    train: set.name.clone(),
                    corpus: u.name.clone(),
                    classifier: c,
                    seed: models[0].seed,
                    distribution: predict_distribution(models[0].classifier(c).as_ref(), &vecs)?,
                });
            }
        }
    }
    let report = EvaluateReport {
        seeds: cfg.seeds.clone(),
        sections,
        distributions,
    };
    out.write_json("evaluate.json", &report)?;
    for d in &report.distributions {
        let rows: Vec<Vec<String>> = d
            .distribution
            .counts
            .iter()
            .map(|(g, c)| vec![g.code().to_string(), c.to_string()])
            .collect();
        out.write_csv(distribution_file(d), &["label", "count"], &rows)?;
    }
    out.write_text("evaluate.txt", &render_evaluate(&report))?;
    Ok(report)
}

fn render_evaluate(r: &EvaluateReport) -> String {
    let mut s = String::new();
    for sec in &r.sections {
        let mut h = vec!["genre".to_string()];
        h.extend(sec.classifiers.iter().map(|c| c.classifier.to_string()));
        let mut rows: Vec<Vec<String>> = GenreLabel::GENRES
            .iter()
            .map(|g| {
                let mut row = vec![g.code().to_string()];
                row.extend(sec.classifiers.iter().map(|c| pm(&c.per_class_f1[g])));
                row
            })
            .collect();
        let mut acc = vec!["accuracy".to_string()];
        acc.extend(sec.classifiers.iter().map(|c| pm(&c.accuracy)));
        rows.push(acc);
        let title = format!("F1 train={} test={} (n={}, seeds={})", sec.train, sec.test, sec.n_test, r.seeds.len());
        s.push_str(&render_table(&title, &h, &rows));
        s.push('\n');

        let conf: Vec<Vec<String>> = sec
            .classifiers
            .iter()
            .flat_map(|c| {
                c.top_confusions
                    .iter()
                    .map(move |p| vec![c.classifier.to_string(), p.gold.code().into(), p.predicted.code().into(), f3(p.rate)])
            })
            .collect();
        let title = format!("Top confusions train={} test={}", sec.train, sec.test);
        s.push_str(&render_table(&title, &headers(&["classifier", "gold", "predicted", "rate"]), &conf));
        s.push('\n');
    }
    for d in &r.distributions {
        let rows: Vec<Vec<String>> = d
            .distribution
            .counts
            .iter()
            .map(|(g, c)| vec![g.code().to_string(), c.to_string(), format!("{:.2}", d.distribution.percentages[g])])
            .collect();
        let title = format!("Predicted genres train={} corpus={} classifier={}", d.train, d.corpus, d.classifier);
        s.push_str(&render_table(&title, &headers(&["genre", "count", "%"]), &rows));
        s.push('\n');
    }
    s
}

// --------------------------------------------------------------- confide

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MwuRow {
    /// `None` is the all-genre total.
    pub genre: Option<GenreLabel>,
    pub stat: Option<f64>,
    pub delta: Option<f64>,
    pub mean_conf_correct: Option<f64>,
    pub mean_conf_wrong: Option<f64>,
    pub n_correct: usize,
    pub n_wrong: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfideSection {
    pub train: String,
    pub test: String,
    pub classifier: ClassifierName,
    pub seed: u64,
    pub median_confidence: f64,
    pub rows: Vec<MwuRow>,
    pub sweep: Vec<SweepPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfideReport {
    pub n_samples: usize,
    pub dropout_p: f64,
    /// The statistic is U / (n_correct * n_wrong).
    pub stat_normalization: String,
    pub sections: Vec<ConfideSection>,
}

fn mwu_row(records: &[ConfidenceRecord], genre: Option<GenreLabel>) -> MwuRow {
    let (c, w) = split_by_correctness(records, genre);
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let m = mann_whitney(&c, &w).ok();
    MwuRow {
        genre,
        stat: m.map(|m| m.stat),
        delta: m.map(|m| m.delta),
        mean_conf_correct: mean(&c),
        mean_conf_wrong: mean(&w),
        n_correct: c.len(),
        n_wrong: w.len(),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Confidence records plus MWU/delta rows for one classifier on one pair.
pub fn confide_section(
    cfg: &ExperimentConfig,
    set: &TrainSet,
    test_name: &str,
    test: &Corpus,
    models: &SeedModels,
    name: ClassifierName,
) -> Result<(ConfideSection, Vec<ConfidenceRecord>)> {
    let vecs = set.vectorize(test);
    let clf = models.classifier(name);
    let records = confidence_records(clf.as_ref(), test.documents(), &vecs, &cfg.confidence)?;
    // Surfaces a gold-label problem as an error; degenerate groups stay n/a.
    if let Err(e @ crate::confidence::ConfidenceError::MissingGold(_)) = confidence_delta(&records) {
        return Err(e.into());
    }
    let mut rows: Vec<MwuRow> = GenreLabel::GENRES
        .iter()
        .filter(|g| test.label_counts().contains_key(g))
        .map(|&g| mwu_row(&records, Some(g)))
        .collect();
    rows.push(mwu_row(&records, None));
    let section = ConfideSection {
        train: set.name.clone(),
        test: test_name.to_string(),
        classifier: name,
        seed: models.seed,
        median_confidence: median(records.iter().map(|r| r.confidence).collect()),
        rows,
        sweep: rejection_sweep(&records, cfg.report.rejection_step),
    };
    Ok((section, records))
}

pub fn cmd_confide(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<ConfideReport> {
    let loaded = load_all(cfg, out)?;
    let mut sections = Vec::new();
    for &(ti, tj) in &loaded.data.pairs {
        let set = &loaded.data.train_sets[ti];
        let test = &loaded.data.tests[tj];
        let models = &loaded.models[ti][0];
        let mut sweep_rows = Vec::new();
        for &c in &cfg.classifiers {
            let (section, records) = confide_section(cfg, set, &test.name, &test.corpus, models, c)?;
            let mut jsonl = String::new();
            for r in &records {
                jsonl.push_str(&serde_json::to_string(r).expect("record serializes"));
                jsonl.push('\n');
            }
            out.write_text(format!("confidence/{}__{}__{}.jsonl", set.name, test.name, c), &jsonl)?;
            sweep_rows.extend(section.sweep.iter().map(|p| {
                vec![
                    c.to_string(),
                    format!("{:.2}", p.threshold),
                    format!("{:.6}", p.kept_fraction),
                    p.kept_accuracy.map_or_else(String::new, |a| format!("{a:.6}")),
                ]
            }));
            sections.push(section);
        }
        out.write_csv(
            format!("confidence/{}__{}__sweep.csv", set.name, test.name),
            &["classifier", "threshold", "kept_fraction", "kept_accuracy"],
            &sweep_rows,
        )?;
    }
    let report = ConfideReport {
        n_samples: cfg.confidence.n_samples,
        dropout_p: cfg.confidence.dropout_p,
        stat_normalization: "U/(n_correct*n_wrong)".to_string(),
        sections,
    };
    out.write_json("confide.json", &report)?;
    out.write_text("confide.txt", &render_confide(&report))?;
    Ok(report)
}

fn render_confide(r: &ConfideReport) -> String {
    let mut s = String::new();
    let mut groups: Vec<(&str, &str)> = Vec::new();
    for sec in &r.sections {
        if !groups.contains(&(sec.train.as_str(), sec.test.as_str())) {
            groups.push((&sec.train, &sec.test));
        }
    }
    for (train, test) in groups {
        let secs: Vec<&ConfideSection> = r.sections.iter().filter(|s| s.train == train && s.test == test).collect();
        let mut h = vec!["genre".to_string()];
        for sec in &secs {
            h.push(format!("{} stat", sec.classifier));
            h.push(format!("{} delta", sec.classifier));
        }
        let n = secs[0].rows.len();
        let rows: Vec<Vec<String>> = (0..n)
            .map(|i| {
                let label = secs[0].rows[i].genre.map_or_else(|| "total".to_string(), |g| g.code().to_string());
                let mut row = vec![label];
                for sec in &secs {
                    row.push(opt3(sec.rows[i].stat));
                    row.push(opt3(sec.rows[i].delta));
                }
                row
            })
            .collect();
        let title = format!("Mann-Whitney confidence test train={train} test={test} (n={}, p={})", r.n_samples, r.dropout_p);
        s.push_str(&render_table(&title, &h, &rows));
        s.push('\n');
    }
    s
}

// ---------------------------------------------------------- compare-dist

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub a: String,
    pub b: String,
    pub labels: Vec<GenreLabel>,
    pub counts_a: Vec<u64>,
    pub counts_b: Vec<u64>,
    pub result: ChiSquaredResult,
}

/// Reads a `label,count` CSV. Labels missing from the file count as zero.
pub fn read_counts(path: &Path) -> Result<Vec<u64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
    let mut counts = vec![0u64; GenreLabel::ALL.len()];
    for rec in r.records() {
        let rec = rec.map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
        let (label, count) = (rec.get(0).unwrap_or(""), rec.get(1).unwrap_or(""));
        let label: GenreLabel = label.trim().parse()?;
        let count: u64 = count
            .trim()
            .parse()
            .map_err(|_| PipelineError::Data(format!("{}: bad count {count:?}", path.display())))?;
        let i = GenreLabel::ALL.iter().position(|&g| g == label).expect("label in ALL");
        counts[i] += count;
    }
    Ok(counts)
}

pub fn cmd_compare_dist(a: &Path, b: &Path, out: &mut Outputs) -> Result<CompareReport> {
    out.input(a);
    out.input(b);
    let (ca, cb) = (read_counts(a)?, read_counts(b)?);
    let result = chi_squared_two_samples(&ca, &cb)?;
    let name = |p: &Path| p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
    let report = CompareReport {
        a: name(a),
        b: name(b),
        labels: GenreLabel::ALL.to_vec(),
        counts_a: ca,
        counts_b: cb,
        result,
    };
    out.write_json("compare_dist.json", &report)?;
    let mut rows: Vec<Vec<String>> = report
        .labels
        .iter()
        .enumerate()
        .map(|(i, g)| {
            vec![
                g.code().to_string(),
                report.counts_a[i].to_string(),
                report.counts_b[i].to_string(),
                format!("{:.4}", report.result.per_category_contribution[i]),
            ]
        })
        .collect();
    rows.push(vec![
        "total".into(),
        report.counts_a.iter().sum::<u64>().to_string(),
        report.counts_b.iter().sum::<u64>().to_string(),
        format!("{:.4}", report.result.statistic),
    ]);
    let title = format!("Chi-squared {} vs {} (dof={})", report.a, report.b, report.result.dof);
    out.write_text("compare_dist.txt", &render_table(&title, &headers(&["genre", "a", "b", "contribution"]), &rows))?;
    Ok(report)
}

// -------------------------------------------------------- learning-curve

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSection {
    pub train: String,
    pub test: String,
    pub classifier: ClassifierName,
    pub points: Vec<CurvePoint>,
}

/// Test accuracy of `name` trained on `sub` with a feature space fitted on
/// `sub` alone.
pub fn subsample_accuracy(cfg: &ExperimentConfig, name: ClassifierName, sub: &Corpus, test: &Corpus, seed: u64) -> Result<f64> {
    let space = fit_feature_space(sub, &cfg.features.feature_config()?)?;
    let set = TrainSet {
        name: String::new(),
        fit: sub.clone(),
        validation: Corpus::default(),
        train: Dataset::from_corpus(sub, &space)?,
        val: Dataset::new(Vec::new(), &[])?,
        space: std::sync::Arc::new(space),
    };
    let tc = member_config(cfg, name, seed);
    let (model, _) = train_member_traced(&set, name, &tc, None)?;
    Ok(accuracy(&model, &set.dataset(test)?)?)
}

pub fn cmd_learning_curve(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Vec<CurveSection>> {
    let data = ExperimentData::load(cfg)?;
    record_inputs(cfg, out);
    let name = cfg.learning_curve.classifier;
    let mut sections = Vec::new();
    for &(ti, tj) in &data.pairs {
        let set = &data.train_sets[ti];
        let test = &data.tests[tj];
        let points = learning_curve(&set.fit, &test.corpus, &cfg.learning_curve.fractions, &cfg.seeds, |sub, te, seed| {
            subsample_accuracy(cfg, name, sub, te, seed)
        })?;
        let rows: Vec<Vec<String>> = points
            .iter()
            .map(|p| {
                vec![
                    format!("{}", p.fraction),
                    p.train_size.to_string(),
                    format!("{:.6}", p.metric.mean),
                    format!("{:.6}", p.metric.halfwidth),
                    p.metric.n_seeds.to_string(),
                ]
            })
            .collect();
        out.write_csv(
            format!("learning_curve/{}__{}.csv", set.name, test.name),
            &["fraction", "train_size", "mean_accuracy", "std", "n_seeds"],
            &rows,
        )?;
        sections.push(CurveSection {
            train: set.name.clone(),
            test: test.name.clone(),
            classifier: name,
            points,
        });
    }
    out.write_json("learning_curve.json", &sections)?;
    let mut text = String::new();
    for s in &sections {
        let rows: Vec<Vec<String>> = s
            .points
            .iter()
            .map(|p| vec![format!("{}", p.fraction), p.train_size.to_string(), pm(&p.metric)])
            .collect();
        let title = format!("Learning curve {} train={} test={}", s.classifier, s.train, s.test);
        text.push_str(&render_table(&title, &headers(&["fraction", "train size", "accuracy"]), &rows));
        text.push('\n');
    }
    out.write_text("learning_curve.txt", &text)?;
    Ok(sections)
}

// ----------------------------------------------------------- epoch-sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSection {
    pub train: String,
    pub classifier: ClassifierName,
    pub seed: u64,
    pub best_val_epoch: Option<usize>,
    pub sweep: EpochSweep,
}

pub fn sweep_section(cfg: &ExperimentConfig, set: &TrainSet) -> Result<SweepSection> {
    let name = cfg.epoch_sweep.classifier;
    let seed = cfg.seeds[0];
    let tc = member_config(cfg, name, seed);
    let sweep = epoch_sweep(cfg.epoch_sweep.max_epochs, |n| {
        train_member_traced(set, name, &tc.with_epochs(n), Some(&set.val)).map(|(_, t)| t)
    })?;
    Ok(SweepSection {
        train: set.name.clone(),
        classifier: name,
        seed,
        best_val_epoch: sweep.best_val_epoch(),
        sweep,
    })
}

pub fn cmd_epoch_sweep(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Vec<SweepSection>> {
    let data = ExperimentData::load(cfg)?;
    record_inputs(cfg, out);
    let mut sections = Vec::new();
    let mut text = String::new();
    for set in &data.train_sets {
        let s = sweep_section(cfg, set)?;
        let rows: Vec<Vec<String>> = s
            .sweep
            .rows
            .iter()
            .map(|r| vec![r.epoch.to_string(), format!("{:.6}", r.train_acc), format!("{:.6}", r.val_acc)])
            .collect();
        out.write_csv(format!("epoch_sweep/{}.csv", set.name), &["epoch", "train_acc", "val_acc"], &rows)?;
        let title = format!("Epoch sweep {} train={} seed={}", s.classifier, s.train, s.seed);
        text.push_str(&render_table(&title, &headers(&["epoch", "train acc", "val acc"]), &rows));
        text.push('\n');
        sections.push(s);
    }
    out.write_json("epoch_sweep.json", &sections)?;
    out.write_text("epoch_sweep.txt", &text)?;
    Ok(sections)
}

// ---------------------------------------------------------- gen-synthetic

pub fn cmd_gen_synthetic(spec: &SyntheticSpec, path: &Path, out: &mut Outputs) -> Result<Corpus> {
    let corpus = generate(spec)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    write_jsonl(&corpus, path)?;
    out.record(&PathBuf::from(path));
    Ok(corpus)
}
