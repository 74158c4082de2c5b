//! Zero-cost proxies: saliency sums and related scores computed from one
//! minibatch on an untrained network.

mod cache;
mod metrics;
mod vote;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, Tensor};
use crate::space::SpaceError;

pub use cache::{fingerprint, score, ScoreCache, ScoreEntry, ScoreRequest};
pub use metrics::{
    fisher, grad_norm, grasp, jacob_cov, jacob_cov_from_rows, snip, synflow, synflow_with_input,
};
pub use vote::{vote_compare, vote_rank, VOTE_METRICS};

#[derive(Debug, Error)]
pub enum ProxyError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("synflow product overflowed the f64 range")]
    Overflow,
    #[error("degenerate model: {0}")]
    Degenerate(String),
    #[error("metric sets differ: {0}")]
    MetricMismatch(String),
    #[error("a real batch is required for data mode `real-batch`")]
    MissingBatch,
    #[error("invalid proxy configuration: {0}")]
    InvalidConfig(String),
    #[error("score cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    GradNorm,
    Snip,
    Grasp,
    Fisher,
    Synflow,
    JacobCov,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::GradNorm,
        Metric::Snip,
        Metric::Grasp,
        Metric::Fisher,
        Metric::Synflow,
        Metric::JacobCov,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Metric::GradNorm => "grad_norm",
            Metric::Snip => "snip",
            Metric::Grasp => "grasp",
            Metric::Fisher => "fisher",
            Metric::Synflow => "synflow",
            Metric::JacobCov => "jacob_cov",
        }
    }

    /// Whether the metric consumes the minibatch.
    pub fn uses_data(self) -> bool {
        self != Metric::Synflow
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Metric {
    type Err = ProxyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| ProxyError::InvalidConfig(format!("unknown metric `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataMode {
    /// Samples drawn from a dataset supplied by the caller.
    #[default]
    RealBatch,
    /// Standard-normal inputs with uniform random labels.
    RandomBatch,
    /// All-ones inputs with uniform random labels.
    OnesBatch,
}

impl FromStr for DataMode {
    type Err = ProxyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real-batch" | "real" => Ok(DataMode::RealBatch),
            "random-batch" | "random" => Ok(DataMode::RandomBatch),
            "ones-batch" | "ones" => Ok(DataMode::OnesBatch),
            other => Err(ProxyError::InvalidConfig(format!("unknown data mode `{other}`"))),
        }
    }
}

/// Which parameters enter the per-network saliency sums.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamScope {
    /// Convolution and linear weights.
    #[default]
    Weights,
    /// Every trainable tensor, including biases and normalization affines.
    AllTrainable,
}

impl ParamScope {
    pub fn includes(self, kind: crate::engine::ParamKind) -> bool {
        match self {
            ParamScope::AllTrainable => true,
            ParamScope::Weights => kind == crate::engine::ParamKind::Weight,
        }
    }
}

impl FromStr for ParamScope {
    type Err = ProxyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "weights" => Ok(ParamScope::Weights),
            "all-trainable" | "all" => Ok(ParamScope::AllTrainable),
            other => Err(ProxyError::InvalidConfig(format!("unknown parameter scope `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyConfig {
    pub batch_size: usize,
    pub data_mode: DataMode,
    /// Seeds synthetic batches and the choice of real samples.
    pub seed: u64,
    /// `k` in the jacob_cov eigenvalue penalty.
    pub jacob_eps: f64,
    pub param_scope: ParamScope,
    /// Score synflow as `ln(1 + S)` in extended range for every model.
    pub synflow_log_domain: bool,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        ProxyConfig {
            batch_size: 128,
            data_mode: DataMode::RealBatch,
            seed: 0,
            jacob_eps: 1e-5,
            param_scope: ParamScope::Weights,
            synflow_log_domain: false,
        }
    }
}

/// Inputs `[B, ...]` with integer labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: Tensor,
    pub targets: Vec<usize>,
}

impl Batch {
    /// Synthetic batch for the non-real data modes.
    pub fn synthetic(mode: DataMode, shape: &[usize], classes: usize, batch: usize, seed: u64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut full = vec![batch];
        full.extend_from_slice(shape);
        let n: usize = full.iter().product();
        let data: Vec<f64> = match mode {
            DataMode::OnesBatch => vec![1.0; n],
            _ => (0..n).map(|_| StandardNormal.sample(&mut rng)).collect(),
        };
        let targets = (0..batch).map(|_| rand::Rng::random_range(&mut rng, 0..classes)).collect();
        Batch {
            inputs: Tensor::new(full, data).expect("batch shape"),
            targets,
        }
    }
}

/// One metric value with the fingerprint of the configuration behind it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyScore {
    pub metric: Metric,
    pub value: f64,
    pub fingerprint: String,
}
