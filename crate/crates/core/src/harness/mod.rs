//! Synthetic data, augmentation, optimization, metrics and the toy
//! training loop.

mod augment;
mod metrics;
mod optim;
mod phantom;
mod train;

pub use augment::{apply_augment, augment, mirror, AugmentDraw};
pub use metrics::{dice_metric, hd95_metric, percentile, squared_distance_transform, surface, Hd95};
pub use optim::{adamw_step, poly_lr, OptimState, PolySchedule};
pub use phantom::{class_intensity, phantom_generate, Phantom, ShapeKind, ShapeSpec, BACKGROUND_INTENSITY};
pub use train::{history_tsv, mix_seed, train_toy, EvalReport, HistoryRow, TrainConfig, TrainOutcome, Trainer};
