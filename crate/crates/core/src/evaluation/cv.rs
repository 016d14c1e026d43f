use std::cell::RefCell;
use std::path::PathBuf;

use log::info;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, per_class_scores, ClassScores, Metrics};
use crate::dataset::{DatasetIndex, Fold, FoldPlan, FrameRecord};
use crate::error::{Error, Result};
use crate::models::{ModelSpec, Network};
use crate::preprocess::FrameCache;
use crate::training::{predict_frames, train_fold, Checkpoint, EpochRecord, TrainingConfig};

pub const AGGREGATION: &str = "unweighted_mean_over_folds";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold_id: usize,
    pub mae: f64,
    pub mse: f64,
    pub accuracy: f64,
    pub n_test_frames: usize,
    pub test_subjects: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class: Option<Vec<ClassScores>>,
}

impl FoldMetrics {
    pub fn metrics(&self) -> Metrics {
        Metrics {
            mae: self.mae,
            mse: self.mse,
            accuracy: self.accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model_name: String,
    /// How `aggregate` was formed from `per_fold`.
    pub aggregation: String,
    pub per_fold: Vec<FoldMetrics>,
    pub aggregate: Metrics,
}

impl MetricsReport {
    /// Builds a report whose aggregate is the unweighted mean over folds.
    pub fn from_folds(model_name: impl Into<String>, mut per_fold: Vec<FoldMetrics>) -> Result<Self> {
        if per_fold.is_empty() {
            return Err(Error::InvalidInput("a report needs at least one fold".into()));
        }
        per_fold.sort_by_key(|f| f.fold_id);
        let n = per_fold.len() as f64;
        let mean = |f: fn(&FoldMetrics) -> f64| per_fold.iter().map(f).sum::<f64>() / n;
        let aggregate = Metrics {
            mae: mean(|f| f.mae),
            mse: mean(|f| f.mse),
            accuracy: mean(|f| f.accuracy),
        };
        Ok(MetricsReport {
            model_name: model_name.into(),
            aggregation: AGGREGATION.into(),
            per_fold,
            aggregate,
        })
    }

    /// Accuracy pooled over all test frames instead of averaged per fold.
    pub fn frame_weighted_accuracy(&self) -> Option<f64> {
        let frames: usize = self.per_fold.iter().map(|f| f.n_test_frames).sum();
        (frames > 0).then(|| {
            self.per_fold
                .iter()
                .map(|f| f.accuracy * f.n_test_frames as f64)
                .sum::<f64>()
                / frames as f64
        })
    }
}

/// A fitted model that labels frames.
pub trait Classifier {
    fn predict(&self, records: &[FrameRecord]) -> Result<Vec<usize>>;

    fn best_epoch(&self) -> Option<usize> {
        None
    }
}

/// Produces a classifier for one fold. Implementations fit on the fold's
/// training and validation subjects only; `data` is the whole dataset.
pub trait FoldTrainer {
    fn train_fold<'s>(
        &'s self,
        fold_id: usize,
        fold: &Fold,
        data: &DatasetIndex,
    ) -> Result<Box<dyn Classifier + 's>>;
}

/// Trains one network per fold on cached frames.
pub struct NetworkTrainer<'a> {
    pub frames: &'a FrameCache,
    pub spec: ModelSpec,
    pub config: TrainingConfig,
    /// Where to write `fold_<id>.json` checkpoints, if anywhere.
    pub checkpoint_dir: Option<PathBuf>,
    /// Receives every epoch record, tagged with its fold.
    pub on_epoch: Option<RefCell<Box<dyn FnMut(usize, &EpochRecord) + 'a>>>,
}

impl<'a> NetworkTrainer<'a> {
    pub fn new(frames: &'a FrameCache, spec: ModelSpec, config: TrainingConfig) -> Self {
        NetworkTrainer {
            frames,
            spec,
            config,
            checkpoint_dir: None,
            on_epoch: None,
        }
    }
}

pub struct TrainedNetwork<'a> {
    pub checkpoint: Checkpoint,
    pub network: Network,
    frames: &'a FrameCache,
}

impl Classifier for TrainedNetwork<'_> {
    fn predict(&self, records: &[FrameRecord]) -> Result<Vec<usize>> {
        predict_frames(&self.network, self.frames, records)
    }

    fn best_epoch(&self) -> Option<usize> {
        Some(self.checkpoint.best_epoch)
    }
}

impl FoldTrainer for NetworkTrainer<'_> {
    fn train_fold<'s>(
        &'s self,
        fold_id: usize,
        fold: &Fold,
        data: &DatasetIndex,
    ) -> Result<Box<dyn Classifier + 's>> {
        let mut log = |r: &EpochRecord| {
            if let Some(cb) = &self.on_epoch {
                (*cb.borrow_mut())(fold_id, r);
            }
        };
        let checkpoint = train_fold(data, self.frames, fold_id, fold, &self.spec, &self.config, &mut log)?;
        if let Some(dir) = &self.checkpoint_dir {
            checkpoint.save(&dir.join(format!("fold_{fold_id}.json")))?;
        }
        let network = checkpoint.network()?;
        Ok(Box::new(TrainedNetwork {
            checkpoint,
            network,
            frames: self.frames,
        }))
    }
}

/// Runs every fold of `plan` with `trainer` and scores each fold's test
/// subjects. Any fold failure aborts the whole run.
pub fn run_cross_validation_with(
    trainer: &dyn FoldTrainer,
    data: &DatasetIndex,
    plan: &FoldPlan,
    model_name: &str,
) -> Result<MetricsReport> {
    plan.validate(data.subjects())?;
    let mut per_fold = Vec::with_capacity(plan.folds.len());
    for (fold_id, fold) in plan.folds.iter().enumerate() {
        let tag = |e: Error| Error::Fold {
            fold_id,
            source: Box::new(e),
        };
        let test = data.subset(&fold.test).map_err(tag)?;
        if let Some(r) = test
            .records()
            .iter()
            .find(|r| fold.train.contains(&r.subject_id) || fold.val.contains(&r.subject_id))
        {
            return Err(tag(Error::InvalidInput(format!(
                "test frame of subject {} also belongs to the training or validation split",
                r.subject_id
            ))));
        }
        let model = trainer.train_fold(fold_id, fold, data).map_err(tag)?;
        let predictions = model.predict(test.records()).map_err(tag)?;
        let targets: Vec<usize> = test.records().iter().map(FrameRecord::class).collect();
        let m = compute_metrics(&predictions, &targets, None).map_err(tag)?;
        info!(
            "fold {fold_id}: mae {:.4} mse {:.4} accuracy {:.2} on {} frames",
            m.mae,
            m.mse,
            m.accuracy,
            targets.len()
        );
        per_fold.push(FoldMetrics {
            fold_id,
            mae: m.mae,
            mse: m.mse,
            accuracy: m.accuracy,
            n_test_frames: targets.len(),
            test_subjects: fold.test.iter().cloned().collect(),
            best_epoch: model.best_epoch(),
            per_class: Some(per_class_scores(&predictions, &targets, data.n_classes())),
        });
    }
    MetricsReport::from_folds(model_name, per_fold)
}

/// Full k-fold run of `spec` on `data`. Seeds of fold `i` derive from
/// `config.seed` and `i` only.
pub fn run_cross_validation(
    data: &DatasetIndex,
    frames: &FrameCache,
    plan: &FoldPlan,
    spec: &ModelSpec,
    config: &TrainingConfig,
) -> Result<MetricsReport> {
    let trainer = NetworkTrainer::new(frames, spec.clone(), config.clone());
    run_cross_validation_with(&trainer, data, plan, spec.name.as_str())
}
