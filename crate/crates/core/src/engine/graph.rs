//! Operator-graph descriptions and their validation.

use serde::{Deserialize, Serialize};

use super::kernels::Window;
use super::EngineError;

/// One operator in a network graph. Shapes exclude the batch dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Op {
    /// Network input; must be the first node.
    Input { shape: Vec<usize> },
    Linear {
        in_features: usize,
        out_features: usize,
        bias: bool,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    },
    Relu,
    /// Batch-statistics normalization over `(batch, spatial)` per channel.
    BatchNorm { channels: usize, affine: bool },
    /// Average pooling; padded taps are excluded from the divisor.
    AvgPool {
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// Elementwise sum of all inputs.
    Add,
    /// Zero tensor shaped like its input.
    Zero,
    /// `[C, H, W] -> [C]`.
    GlobalAvgPool,
    Flatten,
    /// `[G, N, F_in] -> [G, N, F_out]`: `Â·H·Wᵀ + b` per graph, with a fixed
    /// row-major `N×N` propagation matrix `Â`.
    GraphConv {
        nodes: usize,
        adjacency: Vec<f64>,
        in_features: usize,
        out_features: usize,
    },
    /// `[G, N, F] -> [G, F]`: mean over nodes.
    NodeMean,
}

impl Op {
    pub fn kind(&self) -> &'static str {
        match self {
            Op::Input { .. } => "input",
            Op::Linear { .. } => "linear",
            Op::Conv2d { .. } => "conv2d",
            Op::Relu => "relu",
            Op::BatchNorm { .. } => "batch_norm",
            Op::AvgPool { .. } => "avg_pool",
            Op::Add => "add",
            Op::Zero => "zero",
            Op::GlobalAvgPool => "global_avg_pool",
            Op::Flatten => "flatten",
            Op::GraphConv { .. } => "graph_conv",
            Op::NodeMean => "node_mean",
        }
    }

    const KINDS: [&'static str; 12] = [
        "input",
        "linear",
        "conv2d",
        "relu",
        "batch_norm",
        "avg_pool",
        "add",
        "zero",
        "global_avg_pool",
        "flatten",
        "graph_conv",
        "node_mean",
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    #[serde(flatten)]
    pub op: Op,
    /// Indices of producer nodes; each must precede this node.
    #[serde(default)]
    pub inputs: Vec<usize>,
}

/// A topologically ordered operator graph; the last node is the output.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub nodes: Vec<NodeSpec>,
}

impl GraphSpec {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a node and returns its index.
    pub fn push(&mut self, name: impl Into<String>, op: Op, inputs: &[usize]) -> usize {
        self.nodes.push(NodeSpec {
            name: name.into(),
            op,
            inputs: inputs.to_vec(),
        });
        self.nodes.len() - 1
    }

    pub fn from_json(text: &str) -> Result<Self, EngineError> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| EngineError::Parse(e.to_string()))?;
        if let Some(nodes) = raw.get("nodes").and_then(|n| n.as_array()) {
            for node in nodes {
                if let Some(kind) = node.get("kind").and_then(|k| k.as_str()) {
                    if !Op::KINDS.contains(&kind) {
                        return Err(EngineError::UnknownOperator(kind.to_string()));
                    }
                }
            }
        }
        serde_json::from_value(raw).map_err(|e| EngineError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph spec serializes")
    }

    /// Validates the graph and returns its per-sample multiply-accumulates.
    pub fn macs(&self) -> Result<u64, EngineError> {
        Ok(Graph::compile(self)?.macs())
    }
}

/// Where a node's parameters live in the network's parameter list.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub(crate) struct ParamSlots {
    pub weight: Option<usize>,
    pub bias: Option<usize>,
}

/// Parameter role, used to scope saliency sums.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    /// Weight of a convolution, linear or graph-convolution node.
    Weight,
    /// Bias of a convolution, linear or graph-convolution node.
    Bias,
    NormScale,
    NormShift,
}

#[derive(Clone, Debug)]
pub(crate) struct ParamDecl {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub fan_in: usize,
    pub fan_out: usize,
}

/// A validated graph with inferred per-sample shapes.
#[derive(Clone, Debug)]
pub(crate) struct Graph {
    pub nodes: Vec<NodeSpec>,
    pub shapes: Vec<Vec<usize>>,
    pub slots: Vec<ParamSlots>,
    pub params: Vec<ParamDecl>,
    pub windows: Vec<Option<Window>>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Graph {
    pub fn compile(spec: &GraphSpec) -> Result<Self, EngineError> {
        let nodes = spec.nodes.clone();
        if nodes.is_empty() {
            return Err(EngineError::EmptyGraph);
        }
        let mut seen = std::collections::HashSet::new();
        let mut shapes: Vec<Vec<usize>> = Vec::with_capacity(nodes.len());
        let mut slots = Vec::with_capacity(nodes.len());
        let mut windows = Vec::with_capacity(nodes.len());
        let mut params = Vec::new();

        for (idx, node) in nodes.iter().enumerate() {
            if !seen.insert(node.name.clone()) {
                return Err(EngineError::DuplicateName(node.name.clone()));
            }
            for &i in &node.inputs {
                if i >= idx {
                    return Err(EngineError::CyclicGraph {
                        node: node.name.clone(),
                    });
                }
            }
            let is_input = matches!(node.op, Op::Input { .. });
            if is_input != (idx == 0) {
                return Err(EngineError::InvalidGraph(format!(
                    "node `{}`: the input node must be first and unique",
                    node.name
                )));
            }
            let arity_ok = match node.op {
                Op::Input { .. } => node.inputs.is_empty(),
                Op::Add => !node.inputs.is_empty(),
                _ => node.inputs.len() == 1,
            };
            if !arity_ok {
                return Err(EngineError::InvalidGraph(format!(
                    "node `{}` ({}) has {} inputs",
                    node.name,
                    node.op.kind(),
                    node.inputs.len()
                )));
            }
            let inp = node.inputs.first().map(|&i| shapes[i].clone()).unwrap_or_default();
            let mismatch = |expected: String| EngineError::ShapeMismatch {
                node: node.name.clone(),
                expected,
                found: format!("{inp:?}"),
            };
            let mut slot = ParamSlots::default();
            let mut window = None;
            let mut declare = |suffix: &str, kind, shape: Vec<usize>, fan_in, fan_out| {
                params.push(ParamDecl {
                    name: format!("{}.{}", node.name, suffix),
                    kind,
                    shape,
                    fan_in,
                    fan_out,
                });
                params.len() - 1
            };
            let shape = match &node.op {
                Op::Input { shape } => {
                    if shape.is_empty() || shape.contains(&0) {
                        return Err(EngineError::InvalidGraph("input shape must be non-empty and positive".into()));
                    }
                    shape.clone()
                }
                Op::Linear {
                    in_features,
                    out_features,
                    bias,
                } => {
                    if inp != [*in_features] || *out_features == 0 {
                        return Err(mismatch(format!("[{in_features}]")));
                    }
                    slot.weight = Some(declare(
                        "weight",
                        ParamKind::Weight,
                        vec![*out_features, *in_features],
                        *in_features,
                        *out_features,
                    ));
                    if *bias {
                        slot.bias = Some(declare("bias", ParamKind::Bias, vec![*out_features], *in_features, *out_features));
                    }
                    vec![*out_features]
                }
                Op::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    bias,
                } => {
                    if inp.len() != 3 || inp[0] != *in_channels || *out_channels == 0 {
                        return Err(mismatch(format!("[{in_channels}, H, W]")));
                    }
                    let w = Window::new(*kernel, *stride, *padding, inp[1], inp[2])
                        .ok_or_else(|| mismatch(format!("spatial extent >= kernel {kernel}")))?;
                    let fan_in = in_channels * kernel * kernel;
                    let fan_out = out_channels * kernel * kernel;
                    slot.weight = Some(declare(
                        "weight",
                        ParamKind::Weight,
                        vec![*out_channels, *in_channels, *kernel, *kernel],
                        fan_in,
                        fan_out,
                    ));
                    if *bias {
                        slot.bias = Some(declare("bias", ParamKind::Bias, vec![*out_channels], fan_in, fan_out));
                    }
                    window = Some(w);
                    vec![*out_channels, w.out_h, w.out_w]
                }
                Op::Relu | Op::Zero => inp.clone(),
                Op::BatchNorm { channels, affine } => {
                    if inp.len() < 2 || inp[0] != *channels {
                        return Err(mismatch(format!("[{channels}, ...]")));
                    }
                    if *affine {
                        slot.weight = Some(declare("weight", ParamKind::NormScale, vec![*channels], 1, 1));
                        slot.bias = Some(declare("bias", ParamKind::NormShift, vec![*channels], 1, 1));
                    }
                    inp.clone()
                }
                Op::AvgPool { kernel, stride, padding } => {
                    if inp.len() != 3 {
                        return Err(mismatch("[C, H, W]".into()));
                    }
                    let w = Window::new(*kernel, *stride, *padding, inp[1], inp[2])
                        .ok_or_else(|| mismatch(format!("spatial extent >= kernel {kernel}")))?;
                    window = Some(w);
                    vec![inp[0], w.out_h, w.out_w]
                }
                Op::Add => {
                    let first = shapes[node.inputs[0]].clone();
                    for &i in &node.inputs[1..] {
                        if shapes[i] != first {
                            return Err(EngineError::ShapeMismatch {
                                node: node.name.clone(),
                                expected: format!("{first:?}"),
                                found: format!("{:?}", shapes[i]),
                            });
                        }
                    }
                    first
                }
                Op::GlobalAvgPool => {
                    if inp.len() != 3 {
                        return Err(mismatch("[C, H, W]".into()));
                    }
                    vec![inp[0]]
                }
                Op::Flatten => vec![numel(&inp)],
                Op::GraphConv {
                    nodes: n,
                    adjacency,
                    in_features,
                    out_features,
                } => {
                    if inp.len() != 3 || inp[1] != *n || inp[2] != *in_features {
                        return Err(mismatch(format!("[G, {n}, {in_features}]")));
                    }
                    if adjacency.len() != n * n {
                        return Err(EngineError::InvalidGraph(format!(
                            "node `{}`: adjacency must have {} entries",
                            node.name,
                            n * n
                        )));
                    }
                    slot.weight = Some(declare(
                        "weight",
                        ParamKind::Weight,
                        vec![*out_features, *in_features],
                        *in_features,
                        *out_features,
                    ));
                    slot.bias = Some(declare("bias", ParamKind::Bias, vec![*out_features], *in_features, *out_features));
                    vec![inp[0], *n, *out_features]
                }
                Op::NodeMean => {
                    if inp.len() != 3 {
                        return Err(mismatch("[G, N, F]".into()));
                    }
                    vec![inp[0], inp[2]]
                }
            };
            shapes.push(shape);
            slots.push(slot);
            windows.push(window);
        }
        Ok(Graph {
            nodes,
            shapes,
            slots,
            params,
            windows,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().expect("non-empty graph")
    }

    pub fn numel(&self, node: usize) -> usize {
        numel(&self.shapes[node])
    }

    /// Multiply-accumulate count of one sample through every convolution,
    /// linear and graph-convolution node.
    pub fn macs(&self) -> u64 {
        let mut total = 0u64;
        for (idx, node) in self.nodes.iter().enumerate() {
            let out = &self.shapes[idx];
            total += match &node.op {
                Op::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => (kernel * kernel * in_channels * out_channels * out[1] * out[2]) as u64,
                Op::Linear {
                    in_features,
                    out_features,
                    ..
                } => (in_features * out_features) as u64,
                Op::GraphConv {
                    nodes,
                    in_features,
                    out_features,
                    ..
                } => (out[0] * nodes * (in_features * out_features + nodes * out_features)) as u64,
                _ => 0,
            };
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(spec: &mut GraphSpec, shape: &[usize]) -> usize {
        spec.push("x", Op::Input { shape: shape.to_vec() }, &[])
    }

    #[test]
    fn channel_mismatch_is_reported() {
        let mut g = GraphSpec::new();
        let x = input(&mut g, &[3, 4, 4]);
        let c = g.push(
            "c1",
            Op::Conv2d {
                in_channels: 3,
                out_channels: 8,
                kernel: 3,
                stride: 1,
                padding: 1,
                bias: false,
            },
            &[x],
        );
        g.push(
            "c2",
            Op::Conv2d {
                in_channels: 4,
                out_channels: 8,
                kernel: 3,
                stride: 1,
                padding: 1,
                bias: false,
            },
            &[c],
        );
        assert!(matches!(Graph::compile(&g), Err(EngineError::ShapeMismatch { node, .. }) if node == "c2"));
    }

    #[test]
    fn forward_reference_is_cyclic() {
        let mut g = GraphSpec::new();
        let x = input(&mut g, &[2]);
        g.push("r", Op::Relu, &[x + 1]);
        assert!(matches!(Graph::compile(&g), Err(EngineError::CyclicGraph { .. })));
    }

    #[test]
    fn unknown_operator_kind() {
        let text = r#"{"nodes":[{"name":"x","kind":"input","shape":[2]},{"name":"s","kind":"softplus","inputs":[0]}]}"#;
        assert!(matches!(GraphSpec::from_json(text), Err(EngineError::UnknownOperator(k)) if k == "softplus"));
    }

    #[test]
    fn json_round_trip() {
        let mut g = GraphSpec::new();
        let x = input(&mut g, &[3]);
        g.push(
            "fc",
            Op::Linear {
                in_features: 3,
                out_features: 2,
                bias: true,
            },
            &[x],
        );
        assert_eq!(GraphSpec::from_json(&g.to_json()).unwrap(), g);
    }

    #[test]
    fn add_requires_equal_shapes() {
        let mut g = GraphSpec::new();
        let x = input(&mut g, &[3]);
        let l = g.push(
            "fc",
            Op::Linear {
                in_features: 3,
                out_features: 2,
                bias: false,
            },
            &[x],
        );
        g.push("sum", Op::Add, &[x, l]);
        assert!(matches!(Graph::compile(&g), Err(EngineError::ShapeMismatch { .. })));
    }
}
