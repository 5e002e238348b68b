use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{
    softmax_in_place, Adam, ClassDistribution, ClassifierError, Dataset, EpochRecord, PredictMode,
    ProbClassifier, TrainConfig,
};
use crate::corpus::NUM_CLASSES;
use crate::features::FeatureVector;
use crate::rng;

const INFERENCE_STREAM: u64 = 0xd20_9047;

/// Feed-forward surrogate: input -> hidden (ReLU) -> classes, with inverted
/// dropout on the input and hidden activations.
///
/// `w1` is stored one row of `hidden` weights per input feature so that a
/// sparse input touches contiguous memory; `w2` is `[hidden][class]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub(crate) dim: usize,
    pub(crate) hidden: usize,
    pub(crate) dropout_p: f64,
    pub(crate) w1: Vec<f64>,
    pub(crate) b1: Vec<f64>,
    pub(crate) w2: Vec<f64>,
    pub(crate) b2: Vec<f64>,
}

/// Activations of one forward pass, kept for backprop.
struct Pass {
    input: Vec<(usize, f64)>,
    z1: Vec<f64>,
    /// Post-ReLU, post-dropout hidden activations.
    a1: Vec<f64>,
    /// Per-unit dropout multiplier (0 or 1/(1-p), 1 without dropout).
    hidden_scale: Vec<f64>,
    probs: Vec<f64>,
}

impl MlpModel {
    pub fn init(dim: usize, hidden: usize, dropout_p: f64, seed: u64) -> Self {
        let mut r = rng::child(seed, 1);
        // Inputs are L2-normalized, so unit variance keeps first-layer
        // pre-activations at unit scale regardless of the dimension.
        let n1 = Normal::new(0.0, 1.0).expect("valid normal");
        let n2 = Normal::new(0.0, (2.0 / hidden as f64).sqrt()).expect("valid normal");
        Self {
            dim,
            hidden,
            dropout_p,
            w1: (0..dim * hidden).map(|_| n1.sample(&mut r)).collect(),
            b1: vec![0.0; hidden],
            w2: (0..hidden * NUM_CLASSES).map(|_| n2.sample(&mut r)).collect(),
            b2: vec![0.0; NUM_CLASSES],
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        dim: usize,
        hidden: usize,
        dropout_p: f64,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: Vec<f64>,
    ) -> Result<Self, ClassifierError> {
        if w1.len() != dim * hidden || b1.len() != hidden || w2.len() != hidden * NUM_CLASSES || b2.len() != NUM_CLASSES {
            return Err(ClassifierError::Artifact("mlp parameter shapes".into()));
        }
        if !(0.0..1.0).contains(&dropout_p) {
            return Err(ClassifierError::Artifact("dropout_p outside [0,1)".into()));
        }
        if !w1.iter().chain(&b1).chain(&w2).chain(&b2).all(|v| v.is_finite()) {
            return Err(ClassifierError::Artifact("non-finite mlp parameter".into()));
        }
        Ok(Self { dim, hidden, dropout_p, w1, b1, w2, b2 })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn dropout_p(&self) -> f64 {
        self.dropout_p
    }

    /// Same parameters, different dropout rate.
    pub fn with_dropout(mut self, p: f64) -> Self {
        self.dropout_p = p;
        self
    }

    fn forward(&self, x: &FeatureVector, mut dropout: Option<(&mut ChaCha8Rng, f64)>) -> Pass {
        let h = self.hidden;
        let input: Vec<(usize, f64)> = match dropout.as_mut() {
            None => x.iter().collect(),
            Some((r, p)) => {
                let scale = 1.0 / (1.0 - *p);
                x.iter()
                    .map(|(i, v)| (i, if r.gen::<f64>() >= *p { v * scale } else { 0.0 }))
                    .collect()
            }
        };
        let mut z1 = self.b1.clone();
        for &(i, v) in &input {
            if v != 0.0 {
                let row = &self.w1[i * h..(i + 1) * h];
                for (z, w) in z1.iter_mut().zip(row) {
                    *z += v * w;
                }
            }
        }
        let hidden_scale: Vec<f64> = match dropout.as_mut() {
            None => vec![1.0; h],
            Some((r, p)) => {
                let scale = 1.0 / (1.0 - *p);
                (0..h).map(|_| if r.gen::<f64>() >= *p { scale } else { 0.0 }).collect()
            }
        };
        let a1: Vec<f64> = z1
            .iter()
            .zip(&hidden_scale)
            .map(|(&z, &s)| z.max(0.0) * s)
            .collect();
        let mut probs = self.b2.clone();
        for (j, &a) in a1.iter().enumerate() {
            if a != 0.0 {
                let row = &self.w2[j * NUM_CLASSES..(j + 1) * NUM_CLASSES];
                for (z, w) in probs.iter_mut().zip(row) {
                    *z += a * w;
                }
            }
        }
        softmax_in_place(&mut probs);
        Pass { input, z1, a1, hidden_scale, probs }
    }

    fn mean_loss(&self, data: &Dataset) -> f64 {
        let losses = crate::par::map_range(data.len(), |k| {
            let p = self.forward(&data.vectors[k], None).probs;
            -p[data.labels[k]].max(f64::MIN_POSITIVE).ln()
        });
        losses.iter().sum::<f64>() / data.len() as f64
    }
}

impl ProbClassifier for MlpModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn supports_dropout(&self) -> bool {
        true
    }

    fn predict_dropout(&self, vec: &FeatureVector, seed: u64, rate: f64) -> Result<ClassDistribution, ClassifierError> {
        self.check_dim(vec)?;
        if !(0.0..1.0).contains(&rate) {
            return Err(ClassifierError::InvalidConfig(format!("dropout rate {rate} outside [0,1)")));
        }
        let mut r = rng::child(seed, INFERENCE_STREAM);
        Ok(ClassDistribution(self.forward(vec, Some((&mut r, rate))).probs))
    }

    fn predict(&self, vec: &FeatureVector, mode: PredictMode) -> Result<ClassDistribution, ClassifierError> {
        match mode {
            PredictMode::Deterministic => {
                self.check_dim(vec)?;
                Ok(ClassDistribution(self.forward(vec, None).probs))
            }
            PredictMode::Stochastic { seed } => self.predict_dropout(vec, seed, self.dropout_p),
        }
    }
}

pub fn train_mlp(train: &Dataset, cfg: &TrainConfig) -> Result<MlpModel, ClassifierError> {
    train_mlp_traced(train, None, cfg).map(|(m, _)| m)
}

/// Mini-batch Adam with dropout active at `cfg.dropout_p`. Records train
/// loss/accuracy (and validation accuracy when given) after every epoch.
pub fn train_mlp_traced(
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<(MlpModel, Vec<EpochRecord>), ClassifierError> {
    cfg.validate()?;
    train.check_trainable()?;
    if cfg.hidden == 0 {
        return Err(ClassifierError::InvalidConfig("hidden must be at least 1".into()));
    }
    if let Some(v) = val {
        if !v.is_empty() && v.dim() != train.dim() {
            return Err(ClassifierError::DimensionMismatch { expected: train.dim(), got: v.dim() });
        }
    }
    let (dim, h) = (train.dim(), cfg.hidden);
    let mut model = MlpModel::init(dim, h, cfg.dropout_p, cfg.seed);
    let mut opt = [
        Adam::new(cfg.lr, model.w1.len()),
        Adam::new(cfg.lr, h),
        Adam::new(cfg.lr, model.w2.len()),
        Adam::new(cfg.lr, NUM_CLASSES),
    ];
    let mut g_w1 = vec![0.0; model.w1.len()];
    let mut g_b1 = vec![0.0; h];
    let mut g_w2 = vec![0.0; model.w2.len()];
    let mut g_b2 = vec![0.0; NUM_CLASSES];
    let mut touched: Vec<usize> = Vec::new();

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffler = rng::child(cfg.seed, 2);
    let mut dropout_rng = rng::child(cfg.seed, 3);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut t = 0u32;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffler);
        for batch in order.chunks(cfg.batch_size) {
            for &i in &touched {
                g_w1[i * h..(i + 1) * h].iter_mut().for_each(|g| *g = 0.0);
            }
            touched.clear();
            g_b1.iter_mut().chain(g_w2.iter_mut()).chain(g_b2.iter_mut()).for_each(|g| *g = 0.0);

            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &k in batch {
                let pass = model.forward(&train.vectors[k], Some((&mut dropout_rng, cfg.dropout_p)));
                let y = train.labels[k];
                batch_loss -= pass.probs[y].max(f64::MIN_POSITIVE).ln();

                let mut dz2 = pass.probs;
                dz2[y] -= 1.0;
                dz2.iter_mut().for_each(|d| *d *= scale);
                let mut dz1 = vec![0.0; h];
                for j in 0..h {
                    let row = &model.w2[j * NUM_CLASSES..(j + 1) * NUM_CLASSES];
                    let grow = &mut g_w2[j * NUM_CLASSES..(j + 1) * NUM_CLASSES];
                    let a = pass.a1[j];
                    let mut back = 0.0;
                    for c in 0..NUM_CLASSES {
                        grow[c] += a * dz2[c];
                        back += row[c] * dz2[c];
                    }
                    if pass.z1[j] > 0.0 {
                        dz1[j] = back * pass.hidden_scale[j];
                    }
                }
                for (gb, d) in g_b2.iter_mut().zip(&dz2) {
                    *gb += d;
                }
                for (gb, d) in g_b1.iter_mut().zip(&dz1) {
                    *gb += d;
                }
                for &(i, v) in &pass.input {
                    if v != 0.0 {
                        touched.push(i);
                        let grow = &mut g_w1[i * h..(i + 1) * h];
                        for (g, d) in grow.iter_mut().zip(&dz1) {
                            *g += v * d;
                        }
                    }
                }
            }
            if !batch_loss.is_finite() {
                return Err(ClassifierError::NonFiniteLoss { epoch });
            }
            if cfg.l2 > 0.0 {
                for (g, w) in g_w1.iter_mut().zip(&model.w1) {
                    *g += cfg.l2 * w;
                }
                for (g, w) in g_w2.iter_mut().zip(&model.w2) {
                    *g += cfg.l2 * w;
                }
                touched.clear();
                touched.extend(0..dim);
            }
            touched.sort_unstable();
            touched.dedup();

            t += 1;
            let c = opt[0].begin_step(t);
            opt[0].update(&mut model.w1, &g_w1, c);
            opt[1].update(&mut model.b1, &g_b1, c);
            opt[2].update(&mut model.w2, &g_w2, c);
            opt[3].update(&mut model.b2, &g_b2, c);
        }

        let train_loss = model.mean_loss(train);
        if !train_loss.is_finite() {
            return Err(ClassifierError::NonFiniteLoss { epoch });
        }
        let val_acc = match val {
            Some(v) if !v.is_empty() => Some(super::accuracy(&model, v)?),
            _ => None,
        };
        trace.push(EpochRecord {
            epoch,
            train_loss,
            train_acc: super::accuracy(&model, train)?,
            val_acc,
        });
    }
    Ok((model, trace))
}
