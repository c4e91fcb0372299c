use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::arch::ArchitectureConfig;
use super::checkpoint::{Checkpoint, Provenance};
use super::network::{forward, loss_grads_stats, Mode};
use super::tensor::TensorBuffer;
use crate::data::{LabeledDataset, SplitPlan};
use crate::error::{Error, Result};

/// Momentum of batch-norm running statistics.
pub const BN_MOMENTUM: f64 = 0.9;

const EVAL_BATCH: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: AdamConfig,
    pub shuffle_seed: u64,
    pub init_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 25,
            optimizer: AdamConfig::default(),
            shuffle_seed: 0,
            init_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean minibatch loss over the epoch (`None` before training).
    pub loss: Option<f64>,
    pub train_accuracy: f64,
    pub heldout_accuracy: f64,
}

/// Accuracy before training (epoch 0) and after every epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// Eval-mode class probabilities for the given records, one row each.
pub fn predict(ckpt: &Checkpoint, dataset: &LabeledDataset, records: &[usize]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(records.len());
    for chunk in records.chunks(EVAL_BATCH) {
        let (images, _) = dataset.gather(chunk)?;
        let probs = forward(ckpt, &images, Mode::Eval)?;
        for i in 0..chunk.len() {
            out.push(probs.row(i).to_vec());
        }
    }
    Ok(out)
}

/// Fraction of `records` whose arg-max prediction equals the label; 0 for an
/// empty list.
pub fn accuracy(ckpt: &Checkpoint, dataset: &LabeledDataset, records: &[usize]) -> Result<f64> {
    if records.is_empty() {
        return Ok(0.0);
    }
    let probs = predict(ckpt, dataset, records)?;
    let correct = probs
        .iter()
        .zip(records)
        .filter(|(p, &r)| argmax(p) == dataset.labels[r])
        .count();
    Ok(correct as f64 / records.len() as f64)
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// One optimizer update on one batch in train mode; batch-norm running
/// statistics absorb the batch statistics. Returns the batch loss.
pub fn train_step(
    ckpt: &mut Checkpoint,
    images: &TensorBuffer,
    labels: &[usize],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<f64> {
    let (loss, grads, stats) = loss_grads_stats(ckpt, images, labels)?;
    adam_step(&mut ckpt.params, &grads, state, cfg)?;
    for (running, batch) in ckpt.running.iter_mut().zip(stats) {
        for (r, b) in running.mean.iter_mut().zip(&batch.mean) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
        }
        for (r, b) in running.var.iter_mut().zip(&batch.var) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
        }
    }
    Ok(loss)
}

/// Minibatch epochs over `records` (a multiset) with a fresh Adam state,
/// continuing from `ckpt`. Accuracy is tracked on distinct training records
/// and `heldout`.
#[allow(clippy::too_many_arguments)]
pub fn run_epochs(
    ckpt: &mut Checkpoint,
    dataset: &LabeledDataset,
    records: &[usize],
    heldout: &[usize],
    epochs: usize,
    batch_size: usize,
    seed: u64,
    history: &mut TrainHistory,
) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    if batch_size == 0 || batch_size > records.len() {
        return Err(Error::InvalidConfig(format!(
            "batch size {batch_size} must be in 1..={}",
            records.len()
        )));
    }
    let mut distinct = records.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let optimizer = ckpt.train_config.optimizer;
    optimizer.validate()?;
    let mut state = AdamState::new(&ckpt.params);
    let start = history.last().map_or(0, |r| r.epoch);
    if history.epochs.is_empty() {
        history.epochs.push(EpochRecord {
            epoch: 0,
            loss: None,
            train_accuracy: accuracy(ckpt, dataset, &distinct)?,
            heldout_accuracy: accuracy(ckpt, dataset, heldout)?,
        });
    }
    let mut order = records.to_vec();
    for e in 0..epochs {
        let mut rng = crate::seed::rng(crate::seed::derive(seed, "epoch", (start + e) as u64));
        order.copy_from_slice(records);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(batch_size) {
            let (images, labels) = dataset.gather(chunk)?;
            loss_sum += train_step(ckpt, &images, &labels, &mut state, &optimizer)?;
            batches += 1;
        }
        history.epochs.push(EpochRecord {
            epoch: start + e + 1,
            loss: Some(loss_sum / batches as f64),
            train_accuracy: accuracy(ckpt, dataset, &distinct)?,
            heldout_accuracy: accuracy(ckpt, dataset, heldout)?,
        });
    }
    Ok(())
}

/// Trains a fresh network on the members of `split`; held-out accuracy is
/// measured on its non-members.
pub fn train(
    arch: &ArchitectureConfig,
    dataset: &LabeledDataset,
    split: &SplitPlan,
    cfg: &TrainConfig,
) -> Result<(Checkpoint, TrainHistory)> {
    if split.member_indices.is_empty() {
        return Err(Error::InvalidConfig("split has no members".into()));
    }
    if split.dataset_id != dataset.id {
        return Err(Error::ProvenanceMismatch {
            checkpoint: dataset.id.clone(),
            plan: split.describe(),
        });
    }
    let (h, w, c) = dataset.image_shape();
    if arch.input_shape != (h, w, c) || arch.class_count != dataset.class_count {
        return Err(Error::ShapeMismatch {
            context: "architecture vs dataset (height, width, channels, classes)".into(),
            expected: vec![arch.input_shape.0, arch.input_shape.1, arch.input_shape.2, arch.class_count],
            found: vec![h, w, c, dataset.class_count],
        });
    }
    let provenance = Provenance {
        dataset_id: dataset.id.clone(),
        split_seed: split.seed,
        split_with_replacement: split.with_replacement,
        split_complemented: split.complemented,
        member_count: split.member_indices.len(),
        excluded_records: split.excluded.clone(),
        epochs: cfg.epochs,
        ..Provenance::default()
    };
    let mut ckpt = Checkpoint::initialize(arch.clone(), cfg.clone(), provenance)?;
    let mut history = TrainHistory::default();
    if cfg.epochs == 0 {
        let distinct = split.distinct_members();
        history.epochs.push(EpochRecord {
            epoch: 0,
            loss: None,
            train_accuracy: accuracy(&ckpt, dataset, &distinct)?,
            heldout_accuracy: accuracy(&ckpt, dataset, &split.nonmember_indices)?,
        });
        return Ok((ckpt, history));
    }
    run_epochs(
        &mut ckpt,
        dataset,
        &split.member_indices,
        &split.nonmember_indices,
        cfg.epochs,
        cfg.batch_size,
        cfg.shuffle_seed,
        &mut history,
    )?;
    Ok((ckpt, history))
}
