//! Directional properties on the default synthetic fixture.

use std::sync::OnceLock;

use genrekit::classifiers::PredictMode;
use genrekit::cli::commands::{cmd_confide, cmd_evaluate, ConfideReport, EvaluateReport};
use genrekit::cli::output::Outputs;
use genrekit::confidence::{confidence_records, reject_below, ConfidenceRecord};
use genrekit::config::{ClassifierName, ExperimentConfig};
use genrekit::corpus::write_jsonl;
use genrekit::pipeline::{ExperimentData, ModelStore, SeedModels};
use genrekit::synthetic::{generate, SyntheticSpec};

struct Run {
    cfg: ExperimentConfig,
    data: ExperimentData,
    models: SeedModels,
    _dir: tempfile::TempDir,
}

fn run() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixture.jsonl");
        write_jsonl(&generate(&SyntheticSpec::default()).unwrap(), &path).unwrap();
        let cfg = ExperimentConfig {
            train_paths: vec![path],
            output_dir: dir.path().join("out"),
            ..ExperimentConfig::default()
        };
        let data = ExperimentData::load(&cfg).unwrap();
        let models = ModelStore::new(&cfg.output_dir)
            .models(&data.train_sets[0], &cfg)
            .unwrap()
            .remove(0);
        Run {
            cfg,
            data,
            models,
            _dir: dir,
        }
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn records(name: ClassifierName) -> Vec<ConfidenceRecord> {
    let r = run();
    let test = &r.data.tests[0].corpus;
    let vecs = r.data.train_sets[0].vectorize(test);
    confidence_records(r.models.classifier(name).as_ref(), test.documents(), &vecs, &r.cfg.confidence).unwrap()
}

#[test]
fn surrogate_is_more_confident_than_lr() {
    let r = run();
    let val = &r.data.train_sets[0].val;
    let median_max = |name| {
        let clf = r.models.classifier(name);
        median(
            val.vectors
                .iter()
                .map(|v| clf.predict(v, PredictMode::Deterministic).unwrap().max_prob())
                .collect(),
        )
    };
    let lr = median_max(ClassifierName::Lr);
    for name in [ClassifierName::MlpA, ClassifierName::MlpB] {
        let m = median_max(name);
        assert!(m > lr, "{name} median {m} vs lr {lr}");
    }
}

#[test]
fn rejecting_low_confidence_raises_kept_accuracy() {
    for name in ClassifierName::ALL {
        let recs = records(name);
        let all = reject_below(&recs, 0.0);
        let strict = reject_below(&recs, 0.8);
        assert_eq!(all.kept_fraction, 1.0);
        assert!(strict.kept_accuracy.unwrap() >= all.kept_accuracy.unwrap(), "{name}");
    }
}

#[test]
fn confidence_is_reproducible_and_bounded() {
    for name in [ClassifierName::MlpA, ClassifierName::Ensemble3] {
        let (a, b) = (records(name), records(name));
        assert_eq!(a, b);
        for r in &a {
            assert!((0.1 - 1e-12..=1.0 + 1e-12).contains(&r.confidence));
            assert_eq!(r.confidence, r.pooled.max_prob());
            assert_eq!(r.predicted, r.pooled.argmax_label());
        }
    }
}

#[test]
fn reports_round_trip_through_json() {
    let r = run();
    let mut out = Outputs::new(&r.cfg.output_dir).unwrap();
    let eval = cmd_evaluate(&r.cfg, &mut out).unwrap();
    let back: EvaluateReport = serde_json::from_str(&serde_json::to_string(&eval).unwrap()).unwrap();
    assert_eq!(back, eval);
    let conf = cmd_confide(&r.cfg, &mut out).unwrap();
    let back: ConfideReport = serde_json::from_str(&serde_json::to_string(&conf).unwrap()).unwrap();
    assert_eq!(back, conf);
}

#[test]
fn longer_training_does_not_hurt_validation() {
    let r = run();
    let set = &r.data.train_sets[0];
    let acc = |epochs| {
        let tc = genrekit::pipeline::member_config(&r.cfg, ClassifierName::MlpA, 0).with_epochs(epochs);
        let (m, _) = genrekit::pipeline::train_member_traced(set, ClassifierName::MlpA, &tc, None).unwrap();
        genrekit::classifiers::accuracy(&m, &set.val).unwrap()
    };
    let (one, four) = (acc(1), acc(4));
    assert!(four >= one, "1 epoch {one} vs 4 epochs {four}");
}
