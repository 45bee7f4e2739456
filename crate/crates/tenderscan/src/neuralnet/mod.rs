//! Self-contained tensor engine and the three CNN classifiers.
//!
//! All math is 64-bit, single-threaded per call and fully deterministic:
//! seeded He-uniform initialization, fixed iteration order, fixed reduction
//! order. Every layer implements an exact analytic backward pass; the
//! `gradcheck` module verifies them against central finite differences.

mod blocks;
mod gradcheck;
mod layer;
mod loss;
mod metrics;
mod model;
mod optim;
mod tensor;
mod train;
mod weights;

pub use blocks::{InceptionModule, InceptionSpec, ResidualUnit, ResidualUnitSpec, XceptionUnit, XceptionUnitSpec};
pub use gradcheck::{grad_check, GradCheckReport};
pub use layer::{
    concat_channels, split_channels, BatchNorm2d, Conv2d, Dense, Flatten, GlobalAvgPool, Layer,
    MaxPool2d, Padding, Param, Phase, Relu, SepConv2d, Sequential,
};
pub use loss::LossKind;
pub use metrics::{f1_from_pr, metrics_from_confusion, Confusion, Metrics, MetricsError};
pub use model::{build_model, predict_batch, Arch, Model, Prediction, WidthPreset};
pub use optim::{Optimizer, OptimizerKind};
pub use tensor::{NetError, Tensor};
pub use train::{
    confusion_from_predictions, evaluate_model, train_model, write_history_csv, Dataset, EpochRow,
    TrainConfig, TrainError, TrainReport,
};
pub use weights::{load_model, load_weights_into, save_weights, WeightsError};
