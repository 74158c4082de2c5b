use serde::{Deserialize, Serialize};

use super::dataset::SyntheticDataset;
use super::minibench::train_arch;
use super::train::{TrainConfig, TrainRecord};
use super::BenchError;
use crate::engine::InitConfig;
use crate::space::{Architecture, ScaleConfig, SpaceSpec};

/// The `r, c, e` triple of a reduced-training configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReducedTrainConfig {
    pub resolution: usize,
    pub channels: usize,
    pub epochs: usize,
}

impl ReducedTrainConfig {
    /// The configuration that reproduces `scale` and `cfg` unchanged.
    pub fn identity(scale: &ScaleConfig, cfg: &TrainConfig) -> Self {
        ReducedTrainConfig {
            resolution: scale.resolution,
            channels: scale.channels,
            epochs: cfg.epochs,
        }
    }

    /// `r{resolution}c{channels}e{epochs}`.
    pub fn label(&self) -> String {
        format!("r{}c{}e{}", self.resolution, self.channels, self.epochs)
    }

    pub fn scale(&self, base: &ScaleConfig) -> ScaleConfig {
        ScaleConfig {
            resolution: self.resolution,
            channels: self.channels,
            ..*base
        }
    }
}

/// Trains the rescaled model on the resized dataset for the reduced number
/// of epochs (the cosine schedule anneals over that shorter horizon) and
/// returns the full record, so callers can read any epoch of the curve.
#[allow(clippy::too_many_arguments)]
pub fn reduced_training_proxy(
    space: &SpaceSpec,
    arch: &Architecture,
    base_scale: &ScaleConfig,
    reduced: &ReducedTrainConfig,
    data: &SyntheticDataset,
    base_cfg: &TrainConfig,
    init: &InitConfig,
    seed: u64,
) -> Result<TrainRecord, BenchError> {
    if reduced.resolution == 0 || reduced.channels == 0 || reduced.epochs == 0 {
        return Err(BenchError::InvalidConfig("reduced r, c and e must be at least 1".into()));
    }
    if reduced.resolution > base_scale.resolution || reduced.channels > base_scale.channels {
        return Err(BenchError::InvalidConfig(format!(
            "reduced {} exceeds base r{} c{}",
            reduced.label(),
            base_scale.resolution,
            base_scale.channels
        )));
    }
    let scale = reduced.scale(base_scale);
    let cfg = TrainConfig {
        epochs: reduced.epochs,
        ..*base_cfg
    };
    let data = data.resized(reduced.resolution);
    train_arch(space, arch, &scale, &data, &cfg, init, seed)
}
