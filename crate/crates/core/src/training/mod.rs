//! Single-fold training: weighted cross-entropy, Adam, early stopping on
//! validation MAE, checkpoints and a finite-difference gradient check.

mod checkpoint;
mod config;
mod early_stop;
mod gradcheck;
mod loss;
mod optim;
mod trainer;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{LossWeighting, Optimizer, TrainingConfig};
pub use early_stop::{EarlyStopping, StopDecision};
pub use gradcheck::{
    gradient_check, loss_gradient, GradientCheck, GRADCHECK_FLOOR, GRADCHECK_MAX_PARAMS, GRADCHECK_STEP,
};
pub use loss::{cross_entropy, weighted_cross_entropy, weighted_cross_entropy_grad};
pub use optim::{Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use trainer::{
    fold_seed, predict_frames, run_training_loop, train_fold, EpochRecord, EpochRunner, LoopOutcome, EVAL_BATCH,
};
