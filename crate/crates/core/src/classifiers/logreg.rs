use rand::seq::SliceRandom;

use super::{
    softmax_in_place, Adam, ClassDistribution, ClassifierError, Dataset, EpochRecord, PredictMode,
    ProbClassifier, TrainConfig,
};
use crate::corpus::NUM_CLASSES;
use crate::features::FeatureVector;
use crate::rng;

/// Multinomial logistic regression. `weights` is row-major `[class][feature]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel {
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
    pub(crate) dim: usize,
}

impl LogRegModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; NUM_CLASSES * dim],
            bias: vec![0.0; NUM_CLASSES],
            dim,
        }
    }

    pub fn from_parts(weights: Vec<f64>, bias: Vec<f64>, dim: usize) -> Result<Self, ClassifierError> {
        if weights.len() != NUM_CLASSES * dim || bias.len() != NUM_CLASSES {
            return Err(ClassifierError::Artifact("logreg parameter shapes".into()));
        }
        if !weights.iter().chain(&bias).all(|v| v.is_finite()) {
            return Err(ClassifierError::Artifact("non-finite logreg parameter".into()));
        }
        Ok(Self { weights, bias, dim })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn logits(&self, x: &FeatureVector) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (c, zc) in z.iter_mut().enumerate() {
            let row = &self.weights[c * self.dim..(c + 1) * self.dim];
            *zc += x.iter().map(|(i, v)| row[i] * v).sum::<f64>();
        }
        z
    }

    fn probs(&self, x: &FeatureVector) -> Vec<f64> {
        let mut z = self.logits(x);
        softmax_in_place(&mut z);
        z
    }
}

impl ProbClassifier for LogRegModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn supports_dropout(&self) -> bool {
        false
    }

    fn predict_dropout(&self, _: &FeatureVector, _: u64, _: f64) -> Result<ClassDistribution, ClassifierError> {
        Err(ClassifierError::StochasticUnsupported)
    }

    fn predict(&self, vec: &FeatureVector, mode: PredictMode) -> Result<ClassDistribution, ClassifierError> {
        self.check_dim(vec)?;
        match mode {
            PredictMode::Deterministic => Ok(ClassDistribution(self.probs(vec))),
            PredictMode::Stochastic { .. } => Err(ClassifierError::StochasticUnsupported),
        }
    }
}

/// Gradient of [`logreg_loss`] with respect to weights and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRegGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Mean softmax cross-entropy over the batch plus `l2/2 * ||W||^2`
/// (bias unregularized).
pub fn logreg_loss(model: &LogRegModel, xs: &[&FeatureVector], ys: &[usize], l2: f64) -> f64 {
    let ce: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let z = model.logits(x);
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - z[y]
        })
        .sum();
    let reg = 0.5 * l2 * model.weights.iter().map(|w| w * w).sum::<f64>();
    ce / xs.len() as f64 + reg
}

/// Loss and analytic gradient in one pass.
pub fn logreg_loss_and_grad(
    model: &LogRegModel,
    xs: &[&FeatureVector],
    ys: &[usize],
    l2: f64,
) -> (f64, LogRegGrad) {
    let dim = model.dim;
    let scale = 1.0 / xs.len() as f64;
    let mut gw: Vec<f64> = model.weights.iter().map(|w| l2 * w).collect();
    let mut gb = vec![0.0; NUM_CLASSES];
    let mut ce = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let mut p = model.logits(x);
        let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + p.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        ce += lse - p[y];
        softmax_in_place(&mut p);
        p[y] -= 1.0;
        for (c, &delta) in p.iter().enumerate() {
            let d = delta * scale;
            gb[c] += d;
            let row = &mut gw[c * dim..(c + 1) * dim];
            for (i, v) in x.iter() {
                row[i] += d * v;
            }
        }
    }
    let reg = 0.5 * l2 * model.weights.iter().map(|w| w * w).sum::<f64>();
    (ce * scale + reg, LogRegGrad { weights: gw, bias: gb })
}

pub fn train_logreg(train: &Dataset, cfg: &TrainConfig) -> Result<LogRegModel, ClassifierError> {
    train_logreg_traced(train, None, cfg).map(|(m, _)| m)
}

/// Mini-batch Adam from zero initialization. The shuffle schedule is drawn
/// from `cfg.seed`, so equal inputs give bitwise-equal weights.
pub fn train_logreg_traced(
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<(LogRegModel, Vec<EpochRecord>), ClassifierError> {
    cfg.validate()?;
    train.check_trainable()?;
    let mut model = LogRegModel::zeros(train.dim());
    let mut opt_w = Adam::new(cfg.lr, model.weights.len());
    let mut opt_b = Adam::new(cfg.lr, NUM_CLASSES);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffler = rng::child(cfg.seed, 0x10_6e6);
    let all: Vec<&FeatureVector> = train.vectors.iter().collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut t = 0u32;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffler);
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<&FeatureVector> = batch.iter().map(|&i| &train.vectors[i]).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| train.labels[i]).collect();
            let (loss, grad) = logreg_loss_and_grad(&model, &xs, &ys, cfg.l2);
            if !loss.is_finite() {
                return Err(ClassifierError::NonFiniteLoss { epoch });
            }
            t += 1;
            let c = opt_w.begin_step(t);
            opt_w.update(&mut model.weights, &grad.weights, c);
            opt_b.update(&mut model.bias, &grad.bias, c);
        }
        let train_loss = logreg_loss(&model, &all, &train.labels, cfg.l2);
        if !train_loss.is_finite() {
            return Err(ClassifierError::NonFiniteLoss { epoch });
        }
        trace.push(EpochRecord {
            epoch,
            train_loss,
            train_acc: super::accuracy(&model, train)?,
            val_acc: val.map(|v| super::accuracy(&model, v)).transpose()?,
        });
    }
    Ok((model, trace))
}
