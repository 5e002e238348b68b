//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use genrekit::classifiers::{
    accuracy, logreg_loss, logreg_loss_and_grad, LogRegModel, PredictMode, TrainedModel,
};
use genrekit::cli::commands::{cmd_evaluate, subsample_accuracy, sweep_section};
use genrekit::cli::output::Outputs;
use genrekit::confidence::{confidence_delta, confidence_of, confidence_records, split_by_correctness, ConfidenceConfig};
use genrekit::config::{ClassifierName, ExperimentConfig};
use genrekit::corpus::{split, write_jsonl, Corpus, Document, GenreLabel, SplitSpec, NUM_CLASSES};
use genrekit::features::FeatureVector;
use genrekit::pipeline::{train_member, tune_ensembles, SeedModels, TrainSet};
use genrekit::stats::{
    chi_squared_two_samples, learning_curve, mann_whitney, per_class_f1, top_confusions, ConfusionMatrix,
};
use genrekit::synthetic::{generate, SyntheticSpec};

type Outcome = Result<String, String>;
type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// The default synthetic corpus split 75/25, with members of seed 0
/// trained and both ensembles tuned.
struct Fixture {
    cfg: ExperimentConfig,
    set: TrainSet,
    test: Corpus,
    models: SeedModels,
    train_time: Duration,
}

impl Fixture {
    fn build() -> Self {
        let cfg = ExperimentConfig::default();
        let start = Instant::now();
        let corpus = generate(&SyntheticSpec::default()).expect("fixture generates");
        let (train, test) = split(&corpus, &SplitSpec::new(0.75, 0)).expect("fixture splits");
        let set = TrainSet::prepare("fixture", &train, &cfg).expect("fixture prepares");
        let member = |n| Arc::new(train_member(&set, &cfg, n, 0).expect("member trains"));
        let (lr, a, b) = (member(ClassifierName::Lr), member(ClassifierName::MlpA), member(ClassifierName::MlpB));
        let models = tune_ensembles(&set, &cfg, 0, lr, a, b).expect("ensembles tune");
        Self {
            cfg,
            set,
            test,
            models,
            train_time: start.elapsed(),
        }
    }

    fn test_accuracy(&self, name: ClassifierName) -> f64 {
        let data = self.set.dataset(&self.test).unwrap();
        accuracy(self.models.classifier(name).as_ref(), &data).unwrap()
    }
}

const MEMBERS: [ClassifierName; 3] = [ClassifierName::Lr, ClassifierName::MlpA, ClassifierName::MlpB];

fn ensemble_dominance(fx: &Fixture) -> Outcome {
    let val_of = |n| accuracy(fx.models.classifier(n).as_ref(), &fx.set.val).unwrap();
    let members_val: Vec<f64> = MEMBERS.iter().map(|&n| val_of(n)).collect();
    let ens_val = val_of(ClassifierName::Ensemble3);
    let best_member = members_val.iter().copied().fold(f64::MIN, f64::max);
    let members_test: Vec<f64> = MEMBERS.iter().map(|&n| fx.test_accuracy(n)).collect();
    let weakest = members_test.iter().copied().fold(f64::MAX, f64::min);
    let ens_test = fx.test_accuracy(ClassifierName::Ensemble3);
    ensure(
        ens_val >= best_member && ens_test >= weakest && fx.train_time < Duration::from_secs(300),
        format!(
            "val {ens_val:.4} vs best member {best_member:.4}; test {ens_test:.4} vs weakest {weakest:.4}; {:.1}s",
            fx.train_time.as_secs_f64()
        ),
    )
}

fn positive_confidence_delta(fx: &Fixture) -> Outcome {
    let conf = ConfidenceConfig {
        n_samples: 10,
        dropout_p: 0.1,
        base_seed: 0,
    };
    let vecs = fx.set.vectorize(&fx.test);
    let mut parts = Vec::new();
    let mut ok = true;
    for name in ClassifierName::ALL {
        let clf = fx.models.classifier(name);
        let records = confidence_records(clf.as_ref(), fx.test.documents(), &vecs, &conf).unwrap();
        let delta = confidence_delta(&records).unwrap().total.delta.unwrap();
        let (c, w) = split_by_correctness(&records, None);
        let stat = mann_whitney(&c, &w).unwrap().stat;
        ok &= delta > 0.0 && stat > 0.5;
        parts.push(format!("{name} delta {delta:.3} stat {stat:.3}"));
    }
    ensure(ok, parts.join("; "))
}

fn mwu_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let levels = rng.gen_range(2..12);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let n = rng.gen_range(1..=50);
            (0..n).map(|_| rng.gen_range(0..levels) as f64 * 0.25).collect()
        };
        let (c, w) = (draw(&mut rng), draw(&mut rng));
        let mut wins = 0.0;
        for x in &c {
            for y in &w {
                wins += if x > y {
                    1.0
                } else if x == y {
                    0.5
                } else {
                    0.0
                };
            }
        }
        let oracle = wins / (c.len() * w.len()) as f64;
        worst = worst.max((mann_whitney(&c, &w).unwrap().stat - oracle).abs());
    }
    let t = start.elapsed();
    ensure(
        worst <= 1e-12 && t < Duration::from_secs(10),
        format!("max |stat - oracle| {worst:.2e} over 1000 pairs; {:.2}s", t.as_secs_f64()),
    )
}

fn degenerate_dropout(fx: &Fixture) -> Outcome {
    let conf = ConfidenceConfig {
        n_samples: 10,
        dropout_p: 0.0,
        base_seed: 0,
    };
    let pool: Vec<&str> = fx.test.iter().flat_map(|d| d.text.split_whitespace()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for name in [ClassifierName::MlpA, ClassifierName::Ensemble3] {
        let clf = fx.models.classifier(name);
        for i in 0..100 {
            let len = rng.gen_range(3..30);
            let text: Vec<&str> = (0..len).map(|_| pool[rng.gen_range(0..pool.len())]).collect();
            let doc = Document::new(format!("rand-{i}"), &text.join(" "), None).unwrap();
            let rec = confidence_of(clf.as_ref(), &doc, &fx.set.space, &conf).unwrap();
            let vec = fx.set.vectorize(&Corpus::new(vec![doc]).unwrap()).remove(0);
            let det = clf.predict(&vec, PredictMode::Deterministic).unwrap().max_prob();
            worst = worst.max((rec.confidence - det).abs());
        }
    }
    ensure(worst <= 1e-9, format!("sup |confidence - max prob| {worst:.2e} over 100 documents per classifier"))
}

fn lr_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let dim = rng.gen_range(1..=20);
        let batch = rng.gen_range(1..=8);
        let l2 = if rng.gen_bool(0.5) { rng.gen_range(0.0..0.1) } else { 0.0 };
        let weights: Vec<f64> = (0..NUM_CLASSES * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let bias: Vec<f64> = (0..NUM_CLASSES).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let xs: Vec<FeatureVector> = (0..batch)
            .map(|_| FeatureVector::from_dense(&(0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()))
            .collect();
        let ys: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..NUM_CLASSES)).collect();
        let refs: Vec<&FeatureVector> = xs.iter().collect();
        let model = LogRegModel::from_parts(weights.clone(), bias.clone(), dim).unwrap();
        let (_, grad) = logreg_loss_and_grad(&model, &refs, &ys, l2);

        let h = 1e-5;
        let loss_at = |w: &[f64], b: &[f64]| {
            let m = LogRegModel::from_parts(w.to_vec(), b.to_vec(), dim).unwrap();
            logreg_loss(&m, &refs, &ys, l2)
        };
        let mut numeric = Vec::with_capacity(weights.len() + bias.len());
        for i in 0..weights.len() {
            let (mut up, mut down) = (weights.clone(), weights.clone());
            up[i] += h;
            down[i] -= h;
            numeric.push((loss_at(&up, &bias) - loss_at(&down, &bias)) / (2.0 * h));
        }
        for i in 0..bias.len() {
            let (mut up, mut down) = (bias.clone(), bias.clone());
            up[i] += h;
            down[i] -= h;
            numeric.push((loss_at(&weights, &up) - loss_at(&weights, &down)) / (2.0 * h));
        }
        let analytic: Vec<f64> = grad.weights.iter().chain(&grad.bias).copied().collect();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
        let rel = norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-12);
        worst = worst.max(rel);
    }
    ensure(worst < 1e-4, format!("max relative error {worst:.2e} over 50 instances"))
}

fn naive_f1(counts: &[[u64; NUM_CLASSES]; NUM_CLASSES], g: usize) -> f64 {
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fn_ = 0.0;
    for (i, row) in counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            let c = c as f64;
            if i == g && j == g {
                tp += c;
            } else if j == g {
                fp += c;
            } else if i == g {
                fn_ += c;
            }
        }
    }
    if 2.0 * tp + fp + fn_ == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    }
}

fn f1_machinery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let mut counts = [[0u64; NUM_CLASSES]; NUM_CLASSES];
        let dead = rng.gen_range(0..NUM_CLASSES);
        for row in counts.iter_mut() {
            for (j, c) in row.iter_mut().enumerate() {
                let sparse = rng.gen_bool(0.5);
                *c = if j == dead || sparse { 0 } else { rng.gen_range(0..20) };
            }
        }
        counts[0][1] += 1;
        let report = per_class_f1(&ConfusionMatrix::from_counts(counts)).unwrap();
        for (g, label) in GenreLabel::GENRES.iter().enumerate() {
            worst = worst.max((report.per_class[label] - naive_f1(&counts, g)).abs());
        }
    }

    // Legal gold documents exist but the class is never predicted.
    let mut cm = ConfusionMatrix::new();
    cm.add(GenreLabel::A9, GenreLabel::A8, 4);
    cm.add(GenreLabel::A8, GenreLabel::A8, 10);
    cm.add(GenreLabel::A1, GenreLabel::A1, 7);
    let legal = per_class_f1(&cm).unwrap().per_class[&GenreLabel::A9];
    ensure(
        worst <= 1e-12 && legal == 0.0,
        format!("max |f1 - oracle| {worst:.2e} over 200 matrices; never-predicted Legal f1 {legal:.3}"),
    )
}

fn confusion_rate() -> Outcome {
    let mut cm = ConfusionMatrix::new();
    cm.add(GenreLabel::A4, GenreLabel::A1, 5);
    cm.add(GenreLabel::A4, GenreLabel::A4, 18);
    cm.add(GenreLabel::A1, GenreLabel::A1, 30);
    let rate = top_confusions(&cm, 5)
        .into_iter()
        .find(|p| p.gold == GenreLabel::A4 && p.predicted == GenreLabel::A1)
        .map_or(f64::NAN, |p| p.rate);
    ensure((rate - 0.217).abs() <= 0.0005, format!("(A4, A1) rate {rate:.4} from 5 of 23"))
}

fn chi_squared() -> Outcome {
    let equal = chi_squared_two_samples(&[10, 20, 30, 5], &[20, 40, 60, 10]).unwrap().statistic;
    let opposite = chi_squared_two_samples(&[10, 0], &[0, 10]).unwrap().statistic;
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut asym = 0.0f64;
    for _ in 0..100 {
        let a: Vec<u64> = (0..NUM_CLASSES).map(|_| rng.gen_range(1..50)).collect();
        let b: Vec<u64> = (0..NUM_CLASSES).map(|_| rng.gen_range(1..50)).collect();
        let ab = chi_squared_two_samples(&a, &b).unwrap().statistic;
        let ba = chi_squared_two_samples(&b, &a).unwrap().statistic;
        asym = asym.max((ab - ba).abs());
    }
    ensure(
        equal.abs() <= 1e-12 && opposite == 20.0 && asym <= 1e-12,
        format!("proportional {equal:.2e}; opposite {opposite}; max asymmetry {asym:.2e}"),
    )
}

fn learning_curve_direction(fx: &Fixture) -> Outcome {
    let seeds: Vec<u64> = (0..5).collect();
    let name = fx.cfg.learning_curve.classifier;
    let points = learning_curve(&fx.set.fit, &fx.test, &[0.1, 1.0], &seeds, |sub, test, seed| {
        subsample_accuracy(&fx.cfg, name, sub, test, seed)
    })
    .unwrap();
    let (low, high) = (points[0].metric.mean, points[1].metric.mean);
    ensure(
        high - low >= 0.03,
        format!("{name} mean accuracy {low:.3} at 0.1 vs {high:.3} at 1.0 over 5 seeds"),
    )
}

fn overfitting_direction() -> Outcome {
    let corpus = generate(&SyntheticSpec {
        docs_per_class: 20,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.split.validation_fraction = 0.25;
    cfg.epoch_sweep.max_epochs = 30;
    cfg.epoch_sweep.classifier = ClassifierName::MlpA;
    let set = TrainSet::prepare("overfit", &corpus, &cfg).unwrap();
    let section = sweep_section(&cfg, &set).unwrap();
    let gap = section.sweep.final_gap().unwrap();
    let peak = section.sweep.best_val_epoch().unwrap();
    ensure(
        gap >= 0.05 && peak < 30,
        format!("final train-val gap {gap:.3}; validation peaks at epoch {peak}"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("fixture.jsonl");
    write_jsonl(&generate(&SyntheticSpec::default()).unwrap(), &data).unwrap();
    let cfg = ExperimentConfig {
        train_paths: vec![data],
        output_dir: dir.path().join("run"),
        ..ExperimentConfig::default()
    };
    let run = || {
        let mut out = Outputs::new(&cfg.output_dir).unwrap();
        cmd_evaluate(&cfg, &mut out).unwrap();
        let bytes = std::fs::read(cfg.output_dir.join("evaluate.json")).unwrap();
        std::fs::remove_dir_all(&cfg.output_dir).unwrap();
        bytes
    };
    let (first, second) = (run(), run());
    ensure(
        first == second,
        format!("evaluate.json {} and {} bytes, identical: {}", first.len(), second.len(), first == second),
    )
}

fn quality_floor(fx: &Fixture) -> Outcome {
    let lr = fx.test_accuracy(ClassifierName::Lr);
    let a = fx.test_accuracy(ClassifierName::MlpA);
    let b = fx.test_accuracy(ClassifierName::MlpB);
    let kinds_ok = matches!(*fx.models.lr, TrainedModel::LogReg(_)) && matches!(*fx.models.mlp_a, TrainedModel::Mlp(_));
    ensure(
        kinds_ok && lr >= 0.90 && a >= 0.90 && b >= 0.90 && fx.train_time < Duration::from_secs(300),
        format!(
            "lr {lr:.3}, mlp_a {a:.3}, mlp_b {b:.3}; trained in {:.1}s",
            fx.train_time.as_secs_f64()
        ),
    )
}

fn main() {
    let fx = Fixture::build();
    let criteria: Vec<(&str, Check)> = vec![
        ("ensemble dominance", Box::new(|| ensemble_dominance(&fx))),
        ("positive confidence delta", Box::new(|| positive_confidence_delta(&fx))),
        ("mwu oracle equivalence", Box::new(mwu_oracle)),
        ("degenerate dropout identity", Box::new(|| degenerate_dropout(&fx))),
        ("lr gradient", Box::new(lr_gradient)),
        ("f1 machinery", Box::new(f1_machinery)),
        ("confusion rate", Box::new(confusion_rate)),
        ("chi-squared", Box::new(chi_squared)),
        ("learning curve direction", Box::new(|| learning_curve_direction(&fx))),
        ("overfitting direction", Box::new(overfitting_direction)),
        ("determinism", Box::new(determinism)),
        ("quality floor", Box::new(|| quality_floor(&fx))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".to_string()));
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
