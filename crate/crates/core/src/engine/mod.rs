//! Minimal reverse-mode differentiation engine for cell-based CNNs.
//!
//! A [`GraphSpec`] describes a topologically ordered operator graph;
//! [`Network::build`] validates it, infers shapes and draws parameters.
//! Every kernel is generic over [`scalar::Real`], so the same code serves
//! gradients (`f64`), Hessian-vector products ([`scalar::Dual`]) and
//! extended-range synflow products ([`scalar::Wide`]).

mod graph;
mod init;
mod kernels;
mod loss;
mod network;
pub mod scalar;
mod tensor;

use thiserror::Error;

pub use graph::{GraphSpec, NodeSpec, Op, ParamKind};
pub use init::{BiasMode, InitConfig, InitScheme};
pub use loss::LossSpec;
pub use network::{GradientSet, Network, NormMode, ParamSet, SgdConfig};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("shape mismatch at `{node}`: expected {expected}, found {found}")]
    ShapeMismatch {
        node: String,
        expected: String,
        found: String,
    },
    #[error("node `{node}` consumes a node that does not precede it")]
    CyclicGraph { node: String },
    #[error("unknown operator kind `{0}`")]
    UnknownOperator(String),
    #[error("malformed graph description: {0}")]
    Parse(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("duplicate node name `{0}`")]
    DuplicateName(String),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("non-finite values produced at node `{node}`")]
    NonFinite { node: String },
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("cross-entropy loss requires targets")]
    MissingTargets,
    #[error("expected {expected} targets, found {found}")]
    TargetLength { expected: usize, found: usize },
    #[error("target {target} out of range for {classes} classes")]
    InvalidTarget { target: usize, classes: usize },
    #[error("parameter key mismatch: {0}")]
    KeyMismatch(String),
    #[error("learning rate must be non-negative, got {0}")]
    InvalidLearningRate(f64),
}
