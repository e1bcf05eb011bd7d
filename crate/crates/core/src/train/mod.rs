//! Loss, optimizer, learning-rate schedule and the training loop.

mod adam;
mod loss;
mod scheduler;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{bce_loss, one_hot, PROB_CLAMP};
pub use scheduler::{scheduler_update, SchedulerAction, SchedulerState, TrainConfig};
pub use trainer::{
    batch_tensor, evaluate_samples, fetch_training_sample, load_role, load_test_set, run_schedule, train, train_with_observer, EpochRecord,
    EpochRunner, LoadedSample, TrainLog, TrainOutcome,
};
