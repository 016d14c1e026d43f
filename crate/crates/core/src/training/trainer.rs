use log::{debug, info};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
use super::early_stop::EarlyStopping;
use super::loss::weighted_cross_entropy_grad;
use super::optim::Adam;
use super::{LossWeighting, TrainingConfig};
use crate::dataset::{class_counts, resample, ClassWeightTable, DatasetIndex, Fold, FrameRecord};
use crate::error::{Error, Result};
use crate::evaluation::compute_metrics;
use crate::models::{ModelSpec, Network, Tensor};
use crate::preprocess::FrameCache;
use crate::seed::SeedHasher;

/// Frames per inference batch when scoring.
pub const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: f64,
    pub val_mse: f64,
    /// Percentage in `[0, 100]`.
    pub val_accuracy: f64,
}

/// One epoch of training plus validation, abstracted so the stopping logic
/// can be exercised without a network.
pub trait EpochRunner {
    fn run_epoch(&mut self, epoch: usize) -> Result<EpochRecord>;

    /// Called after an epoch that strictly improved validation MAE.
    fn mark_best(&mut self, epoch: usize);
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
}

/// Runs epochs until validation MAE has not strictly improved for
/// `patience` consecutive epochs or `max_epochs` is reached.
///
/// A non-finite training loss aborts with [`Error::Diverged`].
pub fn run_training_loop(
    runner: &mut dyn EpochRunner,
    max_epochs: usize,
    patience: usize,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<LoopOutcome> {
    let mut stopper = EarlyStopping::new(patience);
    let mut history: Vec<EpochRecord> = Vec::new();
    let diverged = |epoch: usize, history: &[EpochRecord]| Error::Diverged {
        epoch,
        last_finite_epoch: history.last().map(|r| r.epoch),
    };
    for epoch in 1..=max_epochs {
        let record = match runner.run_epoch(epoch) {
            Ok(r) => r,
            Err(Error::NonFinite(_)) => return Err(diverged(epoch, &history)),
            Err(e) => return Err(e),
        };
        if !record.train_loss.is_finite() {
            return Err(diverged(epoch, &history));
        }
        on_epoch(&record);
        history.push(record);
        let decision = stopper.observe(epoch, record.val_mae);
        if decision.improved {
            runner.mark_best(epoch);
        }
        if decision.stop {
            break;
        }
    }
    let stopped_epoch = history.last().map_or(0, |r| r.epoch);
    Ok(LoopOutcome {
        best_epoch: stopper.best_epoch().unwrap_or(0),
        stopped_epoch,
        history,
    })
}

/// Predicted class of every record, in inference mode without augmentation.
pub fn predict_frames(net: &Network, frames: &FrameCache, records: &[FrameRecord]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(records.len());
    for chunk in records.chunks(EVAL_BATCH) {
        let batch = load_batch(frames, chunk.iter(), None)?;
        out.extend(net.predict(&batch)?);
    }
    Ok(out)
}

fn load_batch<'a>(
    frames: &FrameCache,
    records: impl Iterator<Item = &'a FrameRecord>,
    augment_seed: Option<u64>,
) -> Result<Tensor> {
    let records: Vec<&FrameRecord> = records.collect();
    let images = records
        .par_iter()
        .map(|r| frames.input(r, augment_seed))
        .collect::<Result<Vec<_>>>()?;
    Tensor::from_images(&images)
}

/// Seed of all randomness in the run for `fold_id`.
pub fn fold_seed(global: u64, fold_id: usize) -> u64 {
    SeedHasher::new(global).str("fold").u64(fold_id as u64).finish()
}

struct FoldRunner<'a> {
    net: Network,
    adam: Adam,
    frames: &'a FrameCache,
    train: Vec<FrameRecord>,
    val: Vec<FrameRecord>,
    weights: ClassWeightTable,
    batch_size: usize,
    run_seed: u64,
    best: Option<Vec<Vec<f64>>>,
}

impl EpochRunner for FoldRunner<'_> {
    fn run_epoch(&mut self, epoch: usize) -> Result<EpochRecord> {
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut SeedHasher::new(self.run_seed).str("shuffle").u64(epoch as u64).rng());
        let augment_seed = SeedHasher::new(self.run_seed).str("augment").u64(epoch as u64).finish();

        let mut loss_sum = 0.0;
        for chunk in order.chunks(self.batch_size) {
            let batch = load_batch(self.frames, chunk.iter().map(|&i| &self.train[i]), Some(augment_seed))?;
            let targets: Vec<usize> = chunk.iter().map(|&i| self.train[i].class()).collect();
            let (logits, tape) = self.net.forward_train(&batch)?;
            let (loss, dlogits) = weighted_cross_entropy_grad(&logits, &targets, &self.weights)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
            }
            let (grads, stats) = self.net.backward(tape, &dlogits)?;
            self.adam.step(&mut self.net, &grads);
            self.net.update_running_stats(&stats);
            loss_sum += loss * chunk.len() as f64;
        }

        let predictions = predict_frames(&self.net, self.frames, &self.val)?;
        let targets: Vec<usize> = self.val.iter().map(FrameRecord::class).collect();
        let m = compute_metrics(&predictions, &targets, None)?;
        Ok(EpochRecord {
            epoch,
            train_loss: loss_sum / self.train.len() as f64,
            val_mae: m.mae,
            val_mse: m.mse,
            val_accuracy: m.accuracy,
        })
    }

    fn mark_best(&mut self, _epoch: usize) {
        self.best = Some(self.net.parameters().to_vec());
    }
}

fn partition(data: &DatasetIndex, subjects: &std::collections::BTreeSet<String>, what: &str) -> Result<DatasetIndex> {
    data.subset(subjects).map_err(|e| match e {
        Error::EmptyDataset(msg) => Error::EmptyDataset(format!("{what} partition: {msg}")),
        other => other,
    })
}

/// Trains one fold: fits on the fold's training subjects, selects the epoch
/// with the lowest validation MAE and returns the network restored to it.
///
/// Class weights come from the training partition only.
pub fn train_fold(
    data: &DatasetIndex,
    frames: &FrameCache,
    fold_id: usize,
    fold: &Fold,
    spec: &ModelSpec,
    config: &TrainingConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<Checkpoint> {
    config.validate()?;
    spec.validate()?;
    if spec.n_classes != data.n_classes() {
        return Err(Error::config(
            "model.n_classes",
            format!("{} does not match the dataset's {} classes", spec.n_classes, data.n_classes()),
        ));
    }
    if spec.input_size != frames.config().target_size {
        return Err(Error::config(
            "model.input_size",
            format!(
                "{} does not match preprocess.target_size {}",
                spec.input_size,
                frames.config().target_size
            ),
        ));
    }
    let run_seed = fold_seed(config.seed, fold_id);
    let mut train = partition(data, &fold.train, "train")?;
    let val = partition(data, &fold.val, "validation")?;
    if let Some(strategy) = config.resample {
        train = resample(&train, strategy, SeedHasher::new(run_seed).str("resample").finish())?;
    }
    let weights = match config.loss_weighting {
        LossWeighting::InverseFrequency => {
            ClassWeightTable::from_counts(&class_counts(train.records(), train.n_classes()))?
        }
        LossWeighting::Uniform => ClassWeightTable::uniform(train.n_classes()),
    };
    let init_seed = SeedHasher::new(run_seed).str("init").finish();
    let net = Network::build(spec, init_seed)?;
    info!(
        "fold {fold_id}: {} train frames, {} validation frames, {} parameters",
        train.len(),
        val.len(),
        net.count_parameters()
    );
    let adam = Adam::new(&net, config.learning_rate);
    let mut runner = FoldRunner {
        net,
        adam,
        frames,
        train: train.records().to_vec(),
        val: val.records().to_vec(),
        weights: weights.clone(),
        batch_size: config.batch_size,
        run_seed,
        best: None,
    };
    let outcome = run_training_loop(&mut runner, config.max_epochs, config.early_stop_patience, &mut |r| {
        debug!("fold {fold_id} epoch {}: {r:?}", r.epoch);
        on_epoch(r)
    })?;
    let parameters = runner
        .best
        .take()
        .unwrap_or_else(|| runner.net.parameters().to_vec());
    Ok(Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        spec: spec.clone(),
        init_seed,
        fold_id,
        config: config.clone(),
        class_weights: weights,
        best_epoch: outcome.best_epoch,
        stopped_epoch: outcome.stopped_epoch,
        history: outcome.history,
        parameters,
    })
}
