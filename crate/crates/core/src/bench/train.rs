use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Split, SyntheticDataset};
use super::BenchError;
use crate::engine::{EngineError, LossSpec, Network, SgdConfig, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub flip: bool,
    pub crop: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.1,
            momentum: 0.9,
            nesterov: true,
            weight_decay: 5e-4,
            epochs: 10,
            batch_size: 64,
            flip: true,
            crop: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(BenchError::InvalidConfig("epochs and batch size must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(BenchError::InvalidConfig(format!("learning rate {}", self.lr)));
        }
        Ok(())
    }
}

/// Learning rate for epoch `e` of `epochs`: `0.5·lr₀·(1 + cos(πe/E))`.
pub fn cosine_lr(lr0: f64, e: usize, epochs: usize) -> f64 {
    0.5 * lr0 * (1.0 + (PI * e as f64 / epochs as f64).cos())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainStatus {
    Ok,
    Failed,
}

/// Outcome of one training run. A failed run keeps the curve up to its
/// last valid epoch, padded with zeros, and has zero test accuracy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub seed: u64,
    pub val_acc: Vec<f64>,
    pub test_acc: f64,
    pub status: TrainStatus,
    pub epochs_completed: usize,
}

/// Fraction of `split` classified correctly, evaluated in chunks of
/// `chunk` samples (normalization uses the chunk's statistics).
pub fn evaluate(net: &mut Network, split: &Split, chunk: usize) -> Result<f64, EngineError> {
    if split.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..split.len()).collect();
    for part in idx.chunks(chunk.max(1)) {
        let b = split.gather(part);
        let out = net.forward(&b.inputs)?;
        let k = out.len() / part.len();
        for (row, &t) in out.data().chunks(k).zip(&b.targets) {
            let mut best = 0;
            for j in 1..k {
                if row[j] > row[best] {
                    best = j;
                }
            }
            correct += usize::from(best == t);
        }
    }
    Ok(correct as f64 / split.len() as f64)
}

/// Random horizontal flip (p = 0.5) and pad-2-then-crop, per sample.
pub fn augment(batch: &mut Tensor, flip: bool, crop: bool, rng: &mut impl Rng) {
    if !flip && !crop {
        return;
    }
    let shape = batch.shape().to_vec();
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let data = batch.data_mut();
    let mut buf = vec![0.0; c * h * w];
    for s in 0..n {
        let img = &mut data[s * c * h * w..(s + 1) * c * h * w];
        let f = flip && rng.random_bool(0.5);
        let (dy, dx) = if crop {
            (rng.random_range(0..=4) as isize - 2, rng.random_range(0..=4) as isize - 2)
        } else {
            (0, 0)
        };
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let sx = if f { w - 1 - x } else { x } as isize + dx;
                    let sy = y as isize + dy;
                    buf[(ch * h + y) * w + x] = if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                        img[(ch * h + sy as usize) * w + sx as usize]
                    } else {
                        0.0
                    };
                }
            }
        }
        img.copy_from_slice(&buf);
    }
}

const EVAL_CHUNK: usize = 128;

/// Minibatch SGD with cosine annealing over `cfg.epochs`; validation
/// accuracy after every epoch and test accuracy at the end.
pub fn train(net: &mut Network, data: &SyntheticDataset, cfg: &TrainConfig) -> Result<TrainRecord, BenchError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut val_acc = Vec::with_capacity(cfg.epochs);
    let failed = |val_acc: &mut Vec<f64>| {
        let done = val_acc.len();
        val_acc.resize(cfg.epochs, 0.0);
        TrainRecord {
            seed: cfg.seed,
            val_acc: std::mem::take(val_acc),
            test_acc: 0.0,
            status: TrainStatus::Failed,
            epochs_completed: done,
        }
    };
    for e in 0..cfg.epochs {
        let hp = SgdConfig {
            lr: cosine_lr(cfg.lr, e, cfg.epochs),
            momentum: cfg.momentum,
            nesterov: cfg.nesterov,
            weight_decay: cfg.weight_decay,
        };
        order.shuffle(&mut rng);
        for part in order.chunks(cfg.batch_size) {
            let mut b = data.train.gather(part);
            augment(&mut b.inputs, cfg.flip, cfg.crop, &mut rng);
            let grads = match net.backward(&LossSpec::cross_entropy(&b.targets), &b.inputs) {
                Ok(g) => g,
                Err(EngineError::NonFinite { .. } | EngineError::NonFiniteLoss) => return Ok(failed(&mut val_acc)),
                Err(e) => return Err(e.into()),
            };
            net.sgd_step(&grads.params, &hp)?;
        }
        match evaluate(net, &data.val, EVAL_CHUNK) {
            Ok(a) => val_acc.push(a),
            Err(EngineError::NonFinite { .. }) => return Ok(failed(&mut val_acc)),
            Err(e) => return Err(e.into()),
        }
    }
    match evaluate(net, &data.test, EVAL_CHUNK) {
        Ok(test_acc) => Ok(TrainRecord {
            seed: cfg.seed,
            val_acc,
            test_acc,
            status: TrainStatus::Ok,
            epochs_completed: cfg.epochs,
        }),
        Err(EngineError::NonFinite { .. }) => Ok(failed(&mut val_acc)),
        Err(e) => Err(e.into()),
    }
}
