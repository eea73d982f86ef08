//! Contrastive training: symmetric InfoNCE with hand-written backprop, Adam,
//! warmup + cosine learning rate, layer freezing, checkpoints and the
//! stage-1 / stage-2 transfer protocol.

mod adam;
mod checkpoint;
mod config;
mod gradcheck;
mod loss;
mod schedule;
mod stage;

pub use adam::{adam_step, adam_update, AdamState};
pub use checkpoint::{Checkpoint, StageTag, CHECKPOINT_MAGIC};
pub use config::{AdamConfig, FreezeSpec, Preset, TauMode, TrainConfig, TAU_MAX, TAU_MIN};
pub use gradcheck::{finite_diff_gradcheck, GradcheckCase, GradcheckReport, GRADCHECK_DENOM_FLOOR};
pub use loss::{infonce_loss, infonce_loss_and_grads, InfoNceGrads};
pub use schedule::lr_at_step;
pub use stage::{
    batch_loss_and_grads, train_stage, train_stage_with, LossLog, LossReport, StageOutcome, TrainCorpus,
};
