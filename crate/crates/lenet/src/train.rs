//! Minibatch SGD with a per-epoch exponential learning-rate decay.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::Architecture;
use crate::error::{LeNetError, Result};
use crate::loss::{softmax, softmax_cross_entropy};
use crate::net::{backward, forward};
use crate::params::{Gradients, Params};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub base_lr: f64,
    /// Per-epoch learning-rate multiplier.
    pub decay_gamma: f64,
    pub batch_size: usize,
    /// Classical momentum; 0 gives plain SGD.
    pub momentum: f64,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            base_lr: 0.01,
            decay_gamma: 0.95,
            batch_size: 64,
            momentum: 0.0,
            seed: 0,
            precision: Precision::F32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(LeNetError::Config("epochs must be at least 1".into()));
        }
        if !(self.decay_gamma > 0.0 && self.decay_gamma <= 1.0) {
            return Err(LeNetError::Config(format!(
                "decay_gamma {} outside (0, 1]",
                self.decay_gamma
            )));
        }
        if self.batch_size == 0 {
            return Err(LeNetError::Config("batch_size must be at least 1".into()));
        }
        if !self.base_lr.is_finite() || self.base_lr < 0.0 {
            return Err(LeNetError::Config(format!(
                "invalid base_lr {}",
                self.base_lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(LeNetError::Config(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// `base_lr · gamma^epoch`.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.base_lr * cfg.decay_gamma.powi(epoch as i32)
}

/// Images (HWC, row-major, one after another) paired with class indices.
#[derive(Debug, Clone, Copy)]
pub struct LabeledImages<'a> {
    pub images: &'a [f32],
    pub labels: &'a [usize],
}

impl<'a> LabeledImages<'a> {
    pub fn new(images: &'a [f32], labels: &'a [usize], per_image: usize) -> Result<Self> {
        if images.len() != labels.len() * per_image {
            return Err(LeNetError::Shape {
                layer: "input",
                expected: format!(
                    "{} values for {} labels",
                    labels.len() * per_image,
                    labels.len()
                ),
                actual: format!("{} values", images.len()),
            });
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\tlr\ttrain_loss\tval_loss\tval_accuracy\n");
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{:.6e}\t{:.6}\t{:.6}\t{:.4}\n",
                r.epoch, r.lr, r.train_loss, r.val_loss, r.val_accuracy
            ));
        }
        out
    }
}

/// Loss and gradients for one minibatch.
pub fn batch_gradients<T: Real>(
    params: &Params<T>,
    images: &[f32],
    labels: &[usize],
) -> Result<(T, Gradients<T>)> {
    let (logits, cache) = forward(params, images, labels.len())?;
    let (loss, dlogits) = softmax_cross_entropy(&logits, labels)?;
    let grads = backward(params, &cache, &dlogits)?;
    Ok((loss, grads))
}

/// One SGD update. With `velocity`, applies `v ← μv + lr·g; w ← w − v`.
pub fn sgd_step<T: Real>(
    params: &mut Params<T>,
    grads: &Gradients<T>,
    lr: f64,
    momentum: f64,
    velocity: &mut Option<Params<T>>,
) {
    let lr = T::cast(lr);
    match velocity {
        None => {
            for (p, g) in params.tensors_mut().iter_mut().zip(grads.tensors()) {
                for (w, &d) in p.data_mut().iter_mut().zip(g.data()) {
                    *w = *w - lr * d;
                }
            }
        }
        Some(v) => {
            let mu = T::cast(momentum);
            for ((p, g), vt) in params
                .tensors_mut()
                .iter_mut()
                .zip(grads.tensors())
                .zip(v.tensors_mut().iter_mut())
            {
                for ((w, &d), m) in p.data_mut().iter_mut().zip(g.data()).zip(vt.data_mut()) {
                    *m = mu * *m + lr * d;
                    *w = *w - *m;
                }
            }
        }
    }
}

/// Trains freshly initialized parameters (seeded by `cfg.seed`).
pub fn train<T: Real>(
    arch: &Architecture,
    train_set: &LabeledImages,
    val_set: &LabeledImages,
    cfg: &TrainConfig,
) -> Result<(Params<T>, TrainLog)> {
    let params = Params::init(arch, cfg.seed)?;
    train_from(params, train_set, val_set, cfg)
}

/// Runs `cfg.epochs` epochs of shuffled minibatch SGD starting from `params`.
/// Returns the final-epoch parameters.
pub fn train_from<T: Real>(
    mut params: Params<T>,
    train_set: &LabeledImages,
    val_set: &LabeledImages,
    cfg: &TrainConfig,
) -> Result<(Params<T>, TrainLog)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(LeNetError::Dataset("training split is empty".into()));
    }
    if val_set.is_empty() {
        return Err(LeNetError::Dataset("validation split is empty".into()));
    }
    let per = params.arch().input_len();
    LabeledImages::new(train_set.images, train_set.labels, per)?;
    LabeledImages::new(val_set.images, val_set.labels, per)?;

    let mut velocity = if cfg.momentum > 0.0 {
        Some(Params::zeros(params.arch())?)
    } else {
        None
    };
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut batch_images = Vec::with_capacity(cfg.batch_size * per);
    let mut batch_labels = Vec::with_capacity(cfg.batch_size);
    let mut log = TrainLog::default();

    for epoch in 0..cfg.epochs {
        let lr = lr_schedule(epoch, cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        order.sort_unstable();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            batch_images.clear();
            batch_labels.clear();
            for &i in idx {
                batch_images.extend_from_slice(&train_set.images[i * per..(i + 1) * per]);
                batch_labels.push(train_set.labels[i]);
            }
            let (loss, grads) = batch_gradients(&params, &batch_images, &batch_labels)?;
            loss_sum += loss.as_f64() * idx.len() as f64;
            sgd_step(&mut params, &grads, lr, cfg.momentum, &mut velocity);
        }
        let (val_loss, val_accuracy) = evaluate(&params, val_set)?;
        log.records.push(EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss,
            val_accuracy,
        });
    }
    Ok((params, log))
}

const EVAL_BATCH: usize = 128;

/// Mean cross-entropy and accuracy over a labeled set.
pub fn evaluate<T: Real>(params: &Params<T>, data: &LabeledImages) -> Result<(f64, f64)> {
    let per = params.arch().input_len();
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for (imgs, labels) in data
        .images
        .chunks(EVAL_BATCH * per)
        .zip(data.labels.chunks(EVAL_BATCH))
    {
        let (logits, _) = forward(params, imgs, labels.len())?;
        let (loss, _) = softmax_cross_entropy(&logits, labels)?;
        loss_sum += loss.as_f64() * labels.len() as f64;
        let probs = softmax(&logits);
        correct += probs
            .data()
            .chunks_exact(params.arch().classes)
            .zip(labels)
            .filter(|(p, &l)| argmax(p) == l)
            .count();
    }
    let n = data.len().max(1) as f64;
    Ok((loss_sum / n, correct as f64 / n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub probabilities: Vec<f64>,
}

/// Softmax probabilities and the arg-max class for each image.
pub fn predict<T: Real>(params: &Params<T>, images: &[f32]) -> Result<Vec<Prediction>> {
    let per = params.arch().input_len();
    if !images.len().is_multiple_of(per) {
        return Err(LeNetError::Shape {
            layer: "input",
            expected: format!("a multiple of {per} values"),
            actual: format!("{} values", images.len()),
        });
    }
    let mut out = Vec::with_capacity(images.len() / per);
    for imgs in images.chunks(EVAL_BATCH * per) {
        let (logits, _) = forward(params, imgs, imgs.len() / per)?;
        let probs = softmax(&logits);
        for row in probs.data().chunks_exact(params.arch().classes) {
            out.push(Prediction {
                label: argmax(row),
                probabilities: row.iter().map(|p| p.as_f64()).collect(),
            });
        }
    }
    Ok(out)
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
