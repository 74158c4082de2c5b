//! Cell search spaces: encoding, enumeration, mutation and materialization.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, GraphSpec, InitConfig, Network, Op};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("unknown operation `{0}`")]
    UnknownOp(String),
    #[error("expected {expected} edges, found {found}")]
    EdgeCount { expected: usize, found: usize },
    #[error("malformed architecture string: {0}")]
    Malformed(String),
    #[error("space has {size} architectures, above the limit of {limit}")]
    TooLarge { size: u128, limit: u128 },
    #[error("space has a single operation; no mutation exists")]
    NoNeighbors,
    #[error("invalid space: {0}")]
    InvalidSpace(String),
    #[error("resolution {resolution} is too small for {reductions} stride-2 reductions")]
    ResolutionTooSmall { resolution: usize, reductions: usize },
    #[error("invalid scale: {0}")]
    InvalidScale(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Operation placed on a cell edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CellOp {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "skip")]
    Skip,
    #[serde(rename = "conv1x1")]
    Conv1x1,
    #[serde(rename = "conv3x3")]
    Conv3x3,
    #[serde(rename = "avgpool3x3")]
    AvgPool3x3,
}

impl CellOp {
    pub const ALL: [CellOp; 5] = [
        CellOp::None,
        CellOp::Skip,
        CellOp::Conv1x1,
        CellOp::Conv3x3,
        CellOp::AvgPool3x3,
    ];

    pub fn token(self) -> &'static str {
        match self {
            CellOp::None => "none",
            CellOp::Skip => "skip",
            CellOp::Conv1x1 => "conv1x1",
            CellOp::Conv3x3 => "conv3x3",
            CellOp::AvgPool3x3 => "avgpool3x3",
        }
    }
}

impl fmt::Display for CellOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for CellOp {
    type Err = SpaceError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CellOp::ALL
            .into_iter()
            .find(|op| op.token() == s)
            .ok_or_else(|| SpaceError::UnknownOp(s.to_string()))
    }
}

/// A cell DAG shape and the operations allowed on its edges.
///
/// Edges run from every node `i` to every later node `j`; they are ordered
/// by target, then source.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub n_nodes: usize,
    pub ops: Vec<CellOp>,
}

impl Default for SpaceSpec {
    fn default() -> Self {
        SpaceSpec::nb201_like()
    }
}

impl SpaceSpec {
    pub fn new(n_nodes: usize, ops: Vec<CellOp>) -> Result<Self, SpaceError> {
        if n_nodes < 2 {
            return Err(SpaceError::InvalidSpace("a cell needs at least 2 nodes".into()));
        }
        if ops.is_empty() {
            return Err(SpaceError::InvalidSpace("the operation set is empty".into()));
        }
        let mut seen = ops.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != ops.len() {
            return Err(SpaceError::InvalidSpace("duplicate operations".into()));
        }
        Ok(SpaceSpec { n_nodes, ops })
    }

    /// 4-node cells with all five operations: 15625 architectures.
    pub fn nb201_like() -> Self {
        SpaceSpec {
            n_nodes: 4,
            ops: CellOp::ALL.to_vec(),
        }
    }

    /// 3-node cells with all five operations: 125 architectures.
    pub fn mini() -> Self {
        SpaceSpec {
            n_nodes: 3,
            ops: CellOp::ALL.to_vec(),
        }
    }

    pub fn num_edges(&self) -> usize {
        self.n_nodes * (self.n_nodes - 1) / 2
    }

    /// `(source, target)` for every edge in canonical order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (1..self.n_nodes).flat_map(|j| (0..j).map(move |i| (i, j))).collect()
    }

    /// `|ops|^edges`, saturating at `u128::MAX`.
    pub fn size(&self) -> u128 {
        (self.ops.len() as u128)
            .checked_pow(self.num_edges() as u32)
            .unwrap_or(u128::MAX)
    }

    /// Every architecture in lexicographic order of edge-op indices (edge 0
    /// most significant).
    pub fn enumerate(&self, limit: u128) -> Result<impl Iterator<Item = Architecture> + '_, SpaceError> {
        let size = self.size();
        if size > limit {
            return Err(SpaceError::TooLarge { size, limit });
        }
        Ok((0..size as u64).map(move |i| self.from_index(i)))
    }

    /// Architecture at position `index` of [`SpaceSpec::enumerate`].
    pub fn from_index(&self, mut index: u64) -> Architecture {
        let k = self.ops.len() as u64;
        let mut edges = vec![0u8; self.num_edges()];
        for slot in edges.iter_mut().rev() {
            *slot = (index % k) as u8;
            index /= k;
        }
        Architecture { edges }
    }

    pub fn index_of(&self, arch: &Architecture) -> u64 {
        let k = self.ops.len() as u64;
        arch.edges.iter().fold(0, |acc, &e| acc * k + e as u64)
    }

    pub fn random(&self, rng: &mut impl Rng) -> Architecture {
        let k = self.ops.len();
        Architecture {
            edges: (0..self.num_edges()).map(|_| rng.random_range(0..k) as u8).collect(),
        }
    }

    /// Every architecture at Hamming distance 1, edge by edge, in op order.
    pub fn neighbors(&self, arch: &Architecture) -> Vec<Architecture> {
        let k = self.ops.len() as u8;
        let mut out = Vec::with_capacity(arch.edges.len() * (k as usize).saturating_sub(1));
        for e in 0..arch.edges.len() {
            for o in 0..k {
                if o != arch.edges[e] {
                    let mut next = arch.clone();
                    next.edges[e] = o;
                    out.push(next);
                }
            }
        }
        out
    }

    /// Uniform draw from [`SpaceSpec::neighbors`].
    pub fn mutate(&self, arch: &Architecture, rng: &mut impl Rng) -> Result<Architecture, SpaceError> {
        let k = self.ops.len();
        if k < 2 {
            return Err(SpaceError::NoNeighbors);
        }
        let edge = rng.random_range(0..arch.edges.len());
        let mut op = rng.random_range(0..k - 1) as u8;
        if op >= arch.edges[edge] {
            op += 1;
        }
        let mut next = arch.clone();
        next.edges[edge] = op;
        Ok(next)
    }

    pub fn op(&self, arch: &Architecture, edge: usize) -> CellOp {
        self.ops[arch.edges[edge] as usize]
    }

    /// `|op~0|+|op~0|op~1|+...`: edges grouped by target node.
    pub fn to_string(&self, arch: &Architecture) -> String {
        let mut s = String::new();
        let mut e = 0;
        for j in 1..self.n_nodes {
            if j > 1 {
                s.push('+');
            }
            s.push('|');
            for i in 0..j {
                s.push_str(self.op(arch, e).token());
                s.push('~');
                s.push_str(&i.to_string());
                s.push('|');
                e += 1;
            }
        }
        s
    }

    pub fn parse(&self, text: &str) -> Result<Architecture, SpaceError> {
        let malformed = || SpaceError::Malformed(text.to_string());
        let mut edges = Vec::with_capacity(self.num_edges());
        let groups: Vec<&str> = text.split('+').collect();
        for group in &groups {
            let inner = group
                .strip_prefix('|')
                .and_then(|g| g.strip_suffix('|'))
                .ok_or_else(malformed)?;
            for (i, token) in inner.split('|').enumerate() {
                let (name, src) = token.rsplit_once('~').ok_or_else(malformed)?;
                if src.parse::<usize>().ok() != Some(i) {
                    return Err(malformed());
                }
                let op: CellOp = name.parse()?;
                let idx = self
                    .ops
                    .iter()
                    .position(|&o| o == op)
                    .ok_or_else(|| SpaceError::UnknownOp(name.to_string()))?;
                edges.push(idx as u8);
            }
        }
        if edges.len() != self.num_edges() {
            return Err(SpaceError::EdgeCount {
                expected: self.num_edges(),
                found: edges.len(),
            });
        }
        if groups.len() != self.n_nodes - 1 {
            return Err(malformed());
        }
        let mut per_group = groups.iter().map(|g| g.matches('~').count());
        if !(1..self.n_nodes).all(|j| per_group.next() == Some(j)) {
            return Err(malformed());
        }
        Ok(Architecture { edges })
    }
}

/// One op index per cell edge, in canonical edge order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Architecture {
    pub edges: Vec<u8>,
}

impl Architecture {
    pub fn new(edges: Vec<u8>) -> Self {
        Architecture { edges }
    }

    /// Number of edges whose ops differ.
    pub fn hamming(&self, other: &Architecture) -> usize {
        self.edges.iter().zip(&other.edges).filter(|(a, b)| a != b).count()
    }

    pub fn uniform(space: &SpaceSpec, op: CellOp) -> Option<Self> {
        let idx = space.ops.iter().position(|&o| o == op)?;
        Some(Architecture {
            edges: vec![idx as u8; space.num_edges()],
        })
    }
}

/// Macro-skeleton dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScaleConfig {
    /// Input resolution `r` (square images).
    pub resolution: usize,
    /// Stem channels `c`; doubled at each reduction.
    pub channels: usize,
    pub cells_per_stage: usize,
    pub stages: usize,
    pub classes: usize,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        ScaleConfig {
            resolution: 8,
            channels: 4,
            cells_per_stage: 1,
            stages: 3,
            classes: 4,
        }
    }
}

impl ScaleConfig {
    fn validate(&self) -> Result<(), SpaceError> {
        if self.resolution == 0 || self.channels == 0 {
            return Err(SpaceError::InvalidScale("r and c must be at least 1".into()));
        }
        if self.stages == 0 || self.classes == 0 {
            return Err(SpaceError::InvalidScale("stages and classes must be at least 1".into()));
        }
        let reductions = self.stages - 1;
        if reductions >= usize::BITS as usize || self.resolution < 1 << reductions {
            return Err(SpaceError::ResolutionTooSmall {
                resolution: self.resolution,
                reductions,
            });
        }
        Ok(())
    }
}

fn conv(cin: usize, cout: usize, kernel: usize, stride: usize) -> Op {
    Op::Conv2d {
        in_channels: cin,
        out_channels: cout,
        kernel,
        stride,
        padding: kernel / 2,
        bias: false,
    }
}

fn push_cell(g: &mut GraphSpec, space: &SpaceSpec, arch: &Architecture, prefix: &str, input: usize, c: usize) -> usize {
    let mut nodes = vec![input];
    let mut relus: Vec<Option<usize>> = vec![None; space.n_nodes];
    let mut e = 0;
    for j in 1..space.n_nodes {
        let mut terms = Vec::with_capacity(j);
        for i in 0..j {
            let src = nodes[i];
            let name = format!("{prefix}.e{i}{j}");
            let out = match space.op(arch, e) {
                CellOp::None => g.push(format!("{name}.zero"), Op::Zero, &[src]),
                CellOp::Skip => src,
                CellOp::AvgPool3x3 => g.push(
                    format!("{name}.pool"),
                    Op::AvgPool {
                        kernel: 3,
                        stride: 1,
                        padding: 1,
                    },
                    &[src],
                ),
                op @ (CellOp::Conv1x1 | CellOp::Conv3x3) => {
                    let k = if op == CellOp::Conv1x1 { 1 } else { 3 };
                    let r = *relus[i].get_or_insert_with(|| g.push(format!("{prefix}.n{i}.relu"), Op::Relu, &[src]));
                    let cv = g.push(format!("{name}.conv"), conv(c, c, k, 1), &[r]);
                    g.push(
                        format!("{name}.bn"),
                        Op::BatchNorm {
                            channels: c,
                            affine: true,
                        },
                        &[cv],
                    )
                }
            };
            terms.push(out);
            e += 1;
        }
        nodes.push(g.push(format!("{prefix}.n{j}"), Op::Add, &terms));
    }
    *nodes.last().expect("cell has nodes")
}

/// Operator graph of `arch` inside the macro skeleton: stem conv, stages of
/// cells with stride-2 channel-doubling reductions between them, global
/// average pooling and a linear classifier.
pub fn graph_spec(space: &SpaceSpec, arch: &Architecture, scale: &ScaleConfig) -> Result<GraphSpec, SpaceError> {
    scale.validate()?;
    if arch.edges.len() != space.num_edges() {
        return Err(SpaceError::EdgeCount {
            expected: space.num_edges(),
            found: arch.edges.len(),
        });
    }
    if let Some(&bad) = arch.edges.iter().find(|&&e| e as usize >= space.ops.len()) {
        return Err(SpaceError::UnknownOp(format!("op index {bad}")));
    }
    let r = scale.resolution;
    let mut c = scale.channels;
    let mut g = GraphSpec::new();
    let x = g.push("input", Op::Input { shape: vec![3, r, r] }, &[]);
    let s = g.push("stem.conv", conv(3, c, 3, 1), &[x]);
    let mut h = g.push(
        "stem.bn",
        Op::BatchNorm {
            channels: c,
            affine: true,
        },
        &[s],
    );
    for stage in 0..scale.stages {
        if stage > 0 {
            let prefix = format!("reduce{stage}");
            let a = g.push(format!("{prefix}.relu"), Op::Relu, &[h]);
            let cv = g.push(format!("{prefix}.conv"), conv(c, 2 * c, 3, 2), &[a]);
            c *= 2;
            h = g.push(
                format!("{prefix}.bn"),
                Op::BatchNorm {
                    channels: c,
                    affine: true,
                },
                &[cv],
            );
        }
        for cell in 0..scale.cells_per_stage {
            h = push_cell(&mut g, space, arch, &format!("s{stage}c{cell}"), h, c);
        }
    }
    let a = g.push("head.relu", Op::Relu, &[h]);
    let p = g.push("head.pool", Op::GlobalAvgPool, &[a]);
    g.push(
        "classifier",
        Op::Linear {
            in_features: c,
            out_features: scale.classes,
            bias: true,
        },
        &[p],
    );
    Ok(g)
}

pub fn materialize(
    space: &SpaceSpec,
    arch: &Architecture,
    scale: &ScaleConfig,
    init: &InitConfig,
) -> Result<Network, SpaceError> {
    Ok(Network::build(&graph_spec(space, arch, scale)?, init)?)
}

/// Multiply-accumulates of one forward pass on a single sample.
pub fn flops(space: &SpaceSpec, arch: &Architecture, scale: &ScaleConfig) -> Result<u64, SpaceError> {
    Ok(graph_spec(space, arch, scale)?.macs()?)
}
