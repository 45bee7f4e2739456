//! Mini-batch training loop, evaluation, and the per-epoch history CSV.

use super::layer::Phase;
use super::metrics::{metrics_from_confusion, Confusion, Metrics};
use super::model::Model;
use super::optim::{Optimizer, OptimizerKind};
use super::tensor::{NetError, Tensor};
use super::weights::{save_weights, WeightsError};
use crate::imagecore::{pad_to_square_gray, resize_bilinear_gray, GrayImage};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Labeled grayscale samples, already normalized to [0,1] CHW at a fixed
/// square size. Label 1 is the positive (notice) class.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub size: usize,
    pub samples: Vec<(Vec<f64>, u8)>,
}

impl Dataset {
    pub fn from_images(images: &[(GrayImage, u8)], size: usize) -> Self {
        let samples = images
            .iter()
            .map(|(img, label)| {
                let sq = pad_to_square_gray(img, 255);
                let rs = resize_bilinear_gray(&sq, size, size);
                (rs.data.iter().map(|&v| v as f64 / 255.0).collect(), *label)
            })
            .collect();
        Self { size, samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn batch(&self, indices: &[usize]) -> (Tensor, Vec<u8>) {
        let s = self.size;
        let mut data = Vec::with_capacity(indices.len() * s * s);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.samples[i].0);
            labels.push(self.samples[i].1);
        }
        (
            Tensor { shape: vec![indices.len(), 1, s, s], data },
            labels,
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub checkpoint_epochs: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 16,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::default(),
            seed: 0,
            checkpoint_epochs: vec![50, 100],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
}

#[derive(Debug)]
pub struct TrainReport {
    pub history: Vec<EpochRow>,
    pub checkpoints: Vec<(usize, PathBuf)>,
}

/// Seeded, fully deterministic mini-batch training. Checkpoints are written
/// at the configured epochs when `checkpoint_dir` is given.
pub fn train_model(
    model: &mut Model,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainReport, TrainError> {
    if train.is_empty() || test.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut checkpoints = Vec::new();
    let mut indices: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        indices.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (bi, chunk) in indices.chunks(cfg.batch_size.max(1)).enumerate() {
            let (x, labels) = train.batch(chunk);
            let logits = model.forward(&x, Phase::Train)?;
            let (loss, dlogits) = model.loss.loss_and_grad(&logits, &labels)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: bi });
            }
            loss_sum += loss * chunk.len() as f64;
            for (s, &y) in model.loss.scores(&logits)?.iter().zip(labels.iter()) {
                if (*s >= 0.5) == (y == 1) {
                    correct += 1;
                }
            }
            model.zero_grads();
            model.backward(&dlogits)?;
            opt.step(&mut model.params());
        }
        model.trained = true;
        let (test_loss, test_acc) = loss_and_acc(model, test)?;
        history.push(EpochRow {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_acc: correct as f64 / train.len() as f64,
            test_loss,
            test_acc,
        });
        if cfg.checkpoint_epochs.contains(&epoch) {
            if let Some(dir) = checkpoint_dir {
                std::fs::create_dir_all(dir)?;
                let path = dir.join(format!("{}-epoch{:03}.tndr", model.arch.name(), epoch));
                save_weights(model, &path)?;
                checkpoints.push((epoch, path));
            }
        }
    }
    Ok(TrainReport { history, checkpoints })
}

fn loss_and_acc(model: &mut Model, data: &Dataset) -> Result<(f64, f64), TrainError> {
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(32) {
        let (x, labels) = data.batch(chunk);
        let logits = model.forward(&x, Phase::Infer)?;
        let (loss, _) = model.loss.loss_and_grad(&logits, &labels)?;
        loss_sum += loss * chunk.len() as f64;
        for (s, &y) in model.loss.scores(&logits)?.iter().zip(labels.iter()) {
            if (*s >= 0.5) == (y == 1) {
                correct += 1;
            }
        }
    }
    Ok((loss_sum / data.len() as f64, correct as f64 / data.len() as f64))
}

/// Confusion-matrix metrics on a labeled set, decision threshold 0.5
/// (sigmoid head) or argmax (softmax head); positive class = notice.
pub fn evaluate_model(model: &mut Model, data: &Dataset) -> Result<Metrics, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut conf = Confusion::default();
    let mut loss_sum = 0.0;
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(32) {
        let (x, labels) = data.batch(chunk);
        let logits = model.forward(&x, Phase::Infer)?;
        let (loss, _) = model.loss.loss_and_grad(&logits, &labels)?;
        loss_sum += loss * chunk.len() as f64;
        for (s, &y) in model.loss.scores(&logits)?.iter().zip(labels.iter()) {
            let pred = *s >= 0.5;
            match (pred, y == 1) {
                (true, true) => conf.tp += 1,
                (true, false) => conf.fp += 1,
                (false, true) => conf.fn_ += 1,
                (false, false) => conf.tn += 1,
            }
        }
    }
    let mut m = metrics_from_confusion(&conf).expect("non-empty dataset");
    m.loss = loss_sum / data.len() as f64;
    Ok(m)
}

/// Confusion counts from per-sample predictions, for cross-checks.
pub fn confusion_from_predictions(preds: &[bool], labels: &[u8]) -> Confusion {
    let mut c = Confusion::default();
    for (&p, &y) in preds.iter().zip(labels.iter()) {
        match (p, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// `epoch,train_loss,train_acc,test_loss,test_acc` per row.
pub fn write_history_csv(path: &Path, history: &[EpochRow]) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "epoch,train_loss,train_acc,test_loss,test_acc")?;
    for r in history {
        writeln!(
            f,
            "{},{},{},{},{}",
            r.epoch, r.train_loss, r.train_acc, r.test_loss, r.test_acc
        )?;
    }
    Ok(())
}
