//! Dual-rate Adam and the training loop.

mod adam;
mod train;

pub use adam::{Adam, BETA1, BETA2, EPSILON};
pub use train::{
    ablate, improvement_pct, train, train_kind, train_shared, write_history_csv, AblationRow,
    Checkpoint, EpochRecord, SharedKind, SharedResult, TrainConfig, TrainResult, HISTORY_HEADER,
};
