//! Ground-truth accuracies: synthetic datasets, a trainer, exhaustively
//! trained mini-benchmarks, reduced-training proxies and synthetic tabular
//! benchmarks with a calibrated proxy.

mod dataset;
mod minibench;
mod reduced;
mod synthetic;
mod tabular;
mod train;

use thiserror::Error;

use crate::engine::EngineError;
use crate::space::SpaceError;

pub use dataset::{gen_dataset, DatasetSpec, Split, SyntheticDataset};
pub use minibench::{build_minibench, train_arch, MinibenchConfig};
pub use reduced::{reduced_training_proxy, ReducedTrainConfig};
pub use synthetic::{gen_synthetic_tabular, NoiseModel, SyntheticTabular, CALIBRATION_TOLERANCE};
pub use tabular::{TabularBenchmark, TABULAR_FORMAT};
pub use train::{augment, cosine_lr, evaluate, train, TrainConfig, TrainRecord, TrainStatus};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown architecture `{0}`")]
    UnknownArch(String),
    #[error("malformed benchmark file: {0}")]
    Format(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
