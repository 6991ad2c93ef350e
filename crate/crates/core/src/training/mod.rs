//! Pair scoring, the margin-distilled loss, snapshot labels and the
//! per-phase training loop.

mod exemplar;
mod loss;
mod score;
mod trainer;

pub use exemplar::{snapshot_labels, Exemplar, SnapshotLabels};
pub use loss::{
    build_combined_loss, combined_loss, combined_loss_value, margin_loss, mse_loss, DistillItem, LossGraph,
    LossValue, RankingItem,
};
pub use score::{score, PairScore, Scorer};
pub use trainer::{train_phase, EpochRecord, Mode, PhaseInputs, TrainConfig, TrainingExample};
