//! Contrastive training of a linear projection head over fixed audio
//! features, with batch-union text targets.

mod adam;
mod loss;
mod trainer;

pub use adam::AdamState;
pub use loss::{build_batch, contrastive_loss, Batch, LossOutput};
pub use trainer::{
    train_projection, write_history_csv, EarlyStopper, EpochRecord, HeadGradient, ProjectionHead,
    StopDecision, TrainConfig, TrainOutcome, TrainingSet, INITIAL_INV_TEMPERATURE,
    MAX_INV_TEMPERATURE,
};
