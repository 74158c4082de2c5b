use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::graph::{Graph, GraphSpec, Op, ParamKind};
use super::init::{initialize, InitConfig};
use super::kernels::{self, NormCache};
use super::loss::LossSpec;
use super::scalar::{Dual, Real};
use super::tensor::Tensor;
use super::EngineError;

/// Named tensors keyed like the network's parameters.
pub type ParamSet = BTreeMap<String, Tensor>;

/// How batch-normalization nodes behave in a forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Normalize with the statistics of the current batch.
    #[default]
    Batch,
    /// Treat normalization nodes as identity.
    Bypass,
}

/// Gradients from one backward pass.
#[derive(Clone, Debug)]
pub struct GradientSet {
    pub loss: f64,
    /// `∂L/∂θ` for every parameter.
    pub params: ParamSet,
    /// `∂L/∂z` for every node output, keyed by node name.
    pub activations: BTreeMap<String, Tensor>,
    /// `∂L/∂x` for the network input.
    pub input: Tensor,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            lr: 0.1,
            momentum: 0.9,
            nesterov: true,
            weight_decay: 5e-4,
        }
    }
}

pub(crate) struct Trace<T> {
    pub out: Vec<Vec<T>>,
    pub norm: Vec<Option<NormCache<T>>>,
}

/// A materialized computation graph with parameters.
///
/// Forward passes cache every node output; backward passes return
/// gradients for every parameter and every cached activation.
#[derive(Clone, Debug)]
pub struct Network {
    graph: Graph,
    params: Vec<Vec<f64>>,
    velocity: Option<Vec<Vec<f64>>>,
    cache: Vec<Tensor>,
    norm_mode: NormMode,
}

impl Network {
    pub fn build(spec: &GraphSpec, init: &InitConfig) -> Result<Self, EngineError> {
        let graph = Graph::compile(spec)?;
        let params = initialize(&graph.params, init);
        Ok(Network {
            graph,
            params,
            velocity: None,
            cache: Vec::new(),
            norm_mode: NormMode::Batch,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        self.graph.input_shape()
    }

    pub fn output_shape(&self) -> &[usize] {
        self.graph.output_shape()
    }

    pub fn node_count(&self) -> usize {
        self.graph.nodes.len()
    }

    pub fn node_names(&self) -> impl Iterator<Item = &str> {
        self.graph.nodes.iter().map(|n| n.name.as_str())
    }

    pub fn node_op(&self, name: &str) -> Option<&Op> {
        self.graph.nodes.iter().find(|n| n.name == name).map(|n| &n.op)
    }

    /// Multiply-accumulates for one sample.
    pub fn macs(&self) -> u64 {
        self.graph.macs()
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(Vec::len).sum()
    }

    pub fn norm_mode(&self) -> NormMode {
        self.norm_mode
    }

    pub fn set_norm_mode(&mut self, mode: NormMode) {
        self.norm_mode = mode;
    }

    /// `(name, kind, tensor)` for every parameter in declaration order.
    pub fn parameters(&self) -> impl Iterator<Item = (&str, ParamKind, Tensor)> + '_ {
        self.graph.params.iter().zip(&self.params).map(|(d, p)| {
            (
                d.name.as_str(),
                d.kind,
                Tensor::new(d.shape.clone(), p.clone()).expect("declared shape"),
            )
        })
    }

    pub fn param_set(&self) -> ParamSet {
        self.parameters().map(|(n, _, t)| (n.to_string(), t)).collect()
    }

    pub fn param_kind(&self, name: &str) -> Option<ParamKind> {
        self.graph.params.iter().find(|d| d.name == name).map(|d| d.kind)
    }

    pub fn param(&self, name: &str) -> Option<Tensor> {
        let i = self.param_index(name)?;
        Tensor::new(self.graph.params[i].shape.clone(), self.params[i].clone()).ok()
    }

    pub fn set_param(&mut self, name: &str, value: &Tensor) -> Result<(), EngineError> {
        let i = self
            .param_index(name)
            .ok_or_else(|| EngineError::KeyMismatch(format!("no parameter `{name}`")))?;
        if value.shape() != self.graph.params[i].shape.as_slice() {
            return Err(EngineError::KeyMismatch(format!(
                "parameter `{name}` has shape {:?}, got {:?}",
                self.graph.params[i].shape,
                value.shape()
            )));
        }
        self.params[i].copy_from_slice(value.data());
        Ok(())
    }

    /// Applies `f` to every parameter value in place.
    pub fn map_params(&mut self, mut f: impl FnMut(ParamKind, f64) -> f64) {
        for (d, p) in self.graph.params.iter().zip(self.params.iter_mut()) {
            for v in p.iter_mut() {
                *v = f(d.kind, *v);
            }
        }
    }

    fn param_index(&self, name: &str) -> Option<usize> {
        self.graph.params.iter().position(|d| d.name == name)
    }

    /// Cached output of node `name` from the most recent forward pass.
    pub fn activation(&self, name: &str) -> Option<&Tensor> {
        let i = self.graph.nodes.iter().position(|n| n.name == name)?;
        self.cache.get(i)
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize, EngineError> {
        let shape = batch.shape();
        if shape.len() != self.graph.input_shape().len() + 1 || &shape[1..] != self.graph.input_shape() {
            return Err(EngineError::ShapeMismatch {
                node: self.graph.nodes[0].name.clone(),
                expected: format!("[B, {:?}]", self.graph.input_shape()),
                found: format!("{shape:?}"),
            });
        }
        Ok(shape[0])
    }

    fn batched(&self, node: usize, batch: usize, data: Vec<f64>) -> Tensor {
        let mut shape = vec![batch];
        shape.extend_from_slice(&self.graph.shapes[node]);
        Tensor::new(shape, data).expect("node shape")
    }

    /// Runs the network on `batch` (`[B, ...input shape]`), caching every
    /// node's output, and returns the output tensor.
    pub fn forward(&mut self, batch: &Tensor) -> Result<Tensor, EngineError> {
        let b = self.check_batch(batch)?;
        let trace = forward_pass(&self.graph, &self.params, batch.data().to_vec(), b, self.norm_mode)?;
        self.store_cache(trace.out, b);
        Ok(self.cache.last().cloned().expect("non-empty graph"))
    }

    fn store_cache(&mut self, outs: Vec<Vec<f64>>, b: usize) {
        self.cache = outs.into_iter().enumerate().map(|(i, d)| self.batched(i, b, d)).collect();
    }

    pub fn loss(&mut self, loss: &LossSpec, batch: &Tensor) -> Result<f64, EngineError> {
        let out = self.forward(batch)?;
        let (b, k) = (out.batch(), out.len() / out.batch());
        loss.validate(b, k)?;
        let (l, _) = loss.eval(out.data(), b, k);
        if !l.is_finite() {
            return Err(EngineError::NonFiniteLoss);
        }
        Ok(l)
    }

    /// Forward then reverse pass; returns `∂L/∂θ`, `∂L/∂z` for every node
    /// and `∂L/∂x`.
    pub fn backward(&mut self, loss: &LossSpec, batch: &Tensor) -> Result<GradientSet, EngineError> {
        let b = self.check_batch(batch)?;
        let classes = self.graph.numel(self.graph.nodes.len() - 1);
        loss.validate(b, classes)?;
        let trace = forward_pass(&self.graph, &self.params, batch.data().to_vec(), b, self.norm_mode)?;
        let (l, gout) = loss.eval(trace.out.last().expect("output"), b, classes);
        if !l.is_finite() {
            return Err(EngineError::NonFiniteLoss);
        }
        let (pgrads, ngrads) = backward_pass(&self.graph, &self.params, &trace, b, self.norm_mode, gout);
        self.store_cache(trace.out, b);
        let params = self
            .graph
            .params
            .iter()
            .zip(pgrads)
            .map(|(d, g)| (d.name.clone(), Tensor::new(d.shape.clone(), g).expect("param shape")))
            .collect();
        let mut activations = BTreeMap::new();
        let mut input = None;
        for (i, g) in ngrads.into_iter().enumerate() {
            let t = self.batched(i, b, g);
            if i == 0 {
                input = Some(t.clone());
            }
            activations.insert(self.graph.nodes[i].name.clone(), t);
        }
        Ok(GradientSet {
            loss: l,
            params,
            activations,
            input: input.expect("input node"),
        })
    }

    fn check_direction(&self, v: &ParamSet) -> Result<(), EngineError> {
        if v.len() != self.graph.params.len() {
            return Err(EngineError::KeyMismatch(format!(
                "expected {} parameter tensors, got {}",
                self.graph.params.len(),
                v.len()
            )));
        }
        for d in &self.graph.params {
            match v.get(&d.name) {
                Some(t) if t.shape() == d.shape.as_slice() => {}
                Some(t) => {
                    return Err(EngineError::KeyMismatch(format!(
                        "`{}` has shape {:?}, expected {:?}",
                        d.name,
                        t.shape(),
                        d.shape
                    )))
                }
                None => return Err(EngineError::KeyMismatch(format!("missing `{}`", d.name))),
            }
        }
        Ok(())
    }

    /// Hessian-vector product `H·v` of the loss with respect to the
    /// parameters, by forward-mode differentiation of the reverse pass.
    pub fn hvp(&mut self, loss: &LossSpec, batch: &Tensor, v: &ParamSet) -> Result<ParamSet, EngineError> {
        self.check_direction(v)?;
        let b = self.check_batch(batch)?;
        let classes = self.graph.numel(self.graph.nodes.len() - 1);
        loss.validate(b, classes)?;
        let params: Vec<Vec<Dual>> = self
            .graph
            .params
            .iter()
            .zip(&self.params)
            .map(|(d, p)| {
                let dir = v[&d.name].data();
                p.iter().zip(dir).map(|(&x, &t)| Dual::new(x, t)).collect()
            })
            .collect();
        let input: Vec<Dual> = batch.data().iter().map(|&x| Dual::new(x, 0.0)).collect();
        let trace = forward_pass(&self.graph, &params, input, b, self.norm_mode)?;
        let (l, gout) = loss.eval(trace.out.last().expect("output"), b, classes);
        if !l.is_finite() {
            return Err(EngineError::NonFiniteLoss);
        }
        let (pgrads, _) = backward_pass(&self.graph, &params, &trace, b, self.norm_mode, gout);
        Ok(self
            .graph
            .params
            .iter()
            .zip(pgrads)
            .map(|(d, g)| {
                let hv = g.iter().map(|x| x.du).collect();
                (d.name.clone(), Tensor::new(d.shape.clone(), hv).expect("param shape"))
            })
            .collect())
    }

    /// `H·v` by central differences of gradients. The perturbation is
    /// scaled so its largest entry is `1e-6·(1 + ‖θ‖∞)`; wider steps straddle
    /// ReLU kinks often enough to spoil the difference.
    pub fn hvp_finite_difference(
        &mut self,
        loss: &LossSpec,
        batch: &Tensor,
        v: &ParamSet,
    ) -> Result<ParamSet, EngineError> {
        self.check_direction(v)?;
        let theta_inf = self.params.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        let v_inf = v.values().flat_map(|t| t.data()).fold(0.0f64, |m, x| m.max(x.abs()));
        if v_inf == 0.0 {
            return Ok(v.iter().map(|(k, t)| (k.clone(), Tensor::zeros(t.shape()))).collect());
        }
        let h = 1e-6 * (1.0 + theta_inf) / v_inf;
        let original = self.params.clone();
        let shift = |net: &mut Network, s: f64| {
            for (i, d) in net.graph.params.iter().enumerate() {
                let dir = v[&d.name].data();
                for (x, (o, t)) in net.params[i].iter_mut().zip(original[i].iter().zip(dir)) {
                    *x = o + s * t;
                }
            }
        };
        shift(self, h);
        let plus = self.backward(loss, batch);
        shift(self, -h);
        let minus = self.backward(loss, batch);
        self.params = original;
        let (plus, minus) = (plus?, minus?);
        Ok(plus
            .params
            .iter()
            .map(|(k, gp)| (k.clone(), gp.axpby(0.5 / h, &minus.params[k], -0.5 / h)))
            .collect())
    }

    /// Parameter gradients of `loss` evaluated in scalar type `T`, with
    /// parameters and input lifted by `lift`. Declaration order.
    pub(crate) fn gradients_in<T: Real>(
        &self,
        loss: &LossSpec,
        input: &Tensor,
        lift: impl Fn(f64) -> T,
    ) -> Result<Vec<Vec<T>>, EngineError> {
        let b = self.check_batch(input)?;
        let classes = self.graph.numel(self.graph.nodes.len() - 1);
        loss.validate(b, classes)?;
        let params: Vec<Vec<T>> = self.params.iter().map(|p| p.iter().map(|&v| lift(v)).collect()).collect();
        let x = input.data().iter().map(|&v| lift(v)).collect();
        let trace = forward_pass(&self.graph, &params, x, b, self.norm_mode)?;
        let (l, gout) = loss.eval(trace.out.last().expect("output"), b, classes);
        if !l.is_finite() {
            return Err(EngineError::NonFiniteLoss);
        }
        Ok(backward_pass(&self.graph, &params, &trace, b, self.norm_mode, gout).0)
    }

    /// One SGD update with optional (Nesterov) momentum and L2 weight decay.
    /// Momentum buffers persist across calls.
    pub fn sgd_step(&mut self, grads: &ParamSet, hp: &SgdConfig) -> Result<(), EngineError> {
        if hp.lr < 0.0 || !hp.lr.is_finite() {
            return Err(EngineError::InvalidLearningRate(hp.lr));
        }
        self.check_direction(grads)?;
        let first = self.velocity.is_none();
        let velocity = self
            .velocity
            .get_or_insert_with(|| self.params.iter().map(|p| vec![0.0; p.len()]).collect());
        for (i, d) in self.graph.params.iter().enumerate() {
            let g = grads[&d.name].data();
            let p = &mut self.params[i];
            let buf = &mut velocity[i];
            for j in 0..p.len() {
                let mut step = g[j] + hp.weight_decay * p[j];
                if hp.momentum != 0.0 {
                    buf[j] = if first { step } else { hp.momentum * buf[j] + step };
                    step = if hp.nesterov { step + hp.momentum * buf[j] } else { buf[j] };
                }
                p[j] -= hp.lr * step;
            }
        }
        Ok(())
    }
}

fn check_finite<T: Real>(data: &[T], graph: &Graph, node: usize) -> Result<(), EngineError> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(EngineError::NonFinite {
            node: graph.nodes[node].name.clone(),
        })
    }
}

pub(crate) fn forward_pass<T: Real, P: AsRef<[T]>>(
    graph: &Graph,
    params: &[P],
    input: Vec<T>,
    batch: usize,
    mode: NormMode,
) -> Result<Trace<T>, EngineError> {
    let n = graph.nodes.len();
    let mut out: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut norm = Vec::with_capacity(n);
    let weight = |i: usize| graph.slots[i].weight.map(|p| params[p].as_ref());
    let bias = |i: usize| graph.slots[i].bias.map(|p| params[p].as_ref());
    for (i, node) in graph.nodes.iter().enumerate() {
        let x = node.inputs.first().map(|&j| out[j].as_slice());
        let in_shape = node.inputs.first().map(|&j| graph.shapes[j].as_slice()).unwrap_or(&[]);
        let mut cache = None;
        let y = match &node.op {
            Op::Input { .. } => {
                check_finite(&input, graph, i)?;
                input.clone()
            }
            Op::Linear {
                in_features,
                out_features,
                ..
            } => kernels::linear_forward(x.unwrap(), weight(i).unwrap(), bias(i), batch, *in_features, *out_features),
            Op::Conv2d {
                in_channels,
                out_channels,
                ..
            } => kernels::conv2d_forward(
                x.unwrap(),
                weight(i).unwrap(),
                bias(i),
                batch,
                *in_channels,
                *out_channels,
                graph.windows[i].as_ref().unwrap(),
            ),
            Op::Relu => x
                .unwrap()
                .iter()
                .map(|&v| if v.value() > 0.0 { v } else { T::zero() })
                .collect(),
            Op::BatchNorm { channels, .. } => match mode {
                NormMode::Bypass => x.unwrap().to_vec(),
                NormMode::Batch => {
                    let spatial = in_shape[1..].iter().product();
                    let (y, c) = kernels::batchnorm_forward(x.unwrap(), weight(i), bias(i), batch, *channels, spatial);
                    cache = Some(c);
                    y
                }
            },
            Op::AvgPool { .. } => {
                kernels::avgpool_forward(x.unwrap(), batch * in_shape[0], graph.windows[i].as_ref().unwrap())
            }
            Op::Add => {
                let mut acc = out[node.inputs[0]].clone();
                for &j in &node.inputs[1..] {
                    for (a, &v) in acc.iter_mut().zip(&out[j]) {
                        *a += v;
                    }
                }
                acc
            }
            Op::Zero => vec![T::zero(); x.unwrap().len()],
            Op::GlobalAvgPool => {
                let spatial = in_shape[1] * in_shape[2];
                let scale = T::from_f64(1.0 / spatial as f64);
                x.unwrap()
                    .chunks(spatial)
                    .map(|plane| {
                        let mut s = T::zero();
                        for &v in plane {
                            s += v;
                        }
                        s * scale
                    })
                    .collect()
            }
            Op::Flatten => x.unwrap().to_vec(),
            Op::GraphConv {
                nodes,
                adjacency,
                in_features,
                out_features,
            } => kernels::graphconv_forward(
                x.unwrap(),
                adjacency,
                weight(i).unwrap(),
                bias(i),
                batch * in_shape[0],
                *nodes,
                *in_features,
                *out_features,
            ),
            Op::NodeMean => {
                let (g, nn, f) = (in_shape[0], in_shape[1], in_shape[2]);
                let scale = T::from_f64(1.0 / nn as f64);
                let x = x.unwrap();
                let mut y = vec![T::zero(); batch * g * f];
                for bg in 0..batch * g {
                    for k in 0..nn {
                        for c in 0..f {
                            y[bg * f + c] += x[(bg * nn + k) * f + c];
                        }
                    }
                }
                y.iter_mut().for_each(|v| *v *= scale);
                y
            }
        };
        check_finite(&y, graph, i)?;
        out.push(y);
        norm.push(cache);
    }
    Ok(Trace { out, norm })
}

/// Reverse pass. Returns `(parameter grads, node-output grads)`.
pub(crate) fn backward_pass<T: Real, P: AsRef<[T]>>(
    graph: &Graph,
    params: &[P],
    trace: &Trace<T>,
    batch: usize,
    mode: NormMode,
    grad_out: Vec<T>,
) -> (Vec<Vec<T>>, Vec<Vec<T>>) {
    let n = graph.nodes.len();
    let mut pgrads: Vec<Vec<T>> = params.iter().map(|p| vec![T::zero(); p.as_ref().len()]).collect();
    let mut ngrads: Vec<Vec<T>> = (0..n).map(|i| vec![T::zero(); trace.out[i].len()]).collect();
    ngrads[n - 1] = grad_out;
    let weight = |i: usize| graph.slots[i].weight.map(|p| params[p].as_ref());

    for i in (1..n).rev() {
        let node = &graph.nodes[i];
        let gy = std::mem::take(&mut ngrads[i]);
        let src = node.inputs[0];
        let x = trace.out[src].as_slice();
        let in_shape = graph.shapes[src].as_slice();
        let accumulate = |ngrads: &mut Vec<Vec<T>>, j: usize, g: &[T]| {
            for (a, &v) in ngrads[j].iter_mut().zip(g) {
                *a += v;
            }
        };
        match &node.op {
            Op::Input { .. } => unreachable!("input is node 0"),
            Op::Linear {
                in_features,
                out_features,
                ..
            } => {
                let (gx, gw, gb) =
                    kernels::linear_backward(x, weight(i).unwrap(), &gy, batch, *in_features, *out_features);
                accumulate(&mut ngrads, src, &gx);
                pgrads[graph.slots[i].weight.unwrap()] = gw;
                if let Some(bi) = graph.slots[i].bias {
                    pgrads[bi] = gb;
                }
            }
            Op::Conv2d {
                in_channels,
                out_channels,
                ..
            } => {
                let (gx, gw, gb) = kernels::conv2d_backward(
                    x,
                    weight(i).unwrap(),
                    &gy,
                    batch,
                    *in_channels,
                    *out_channels,
                    graph.windows[i].as_ref().unwrap(),
                );
                accumulate(&mut ngrads, src, &gx);
                pgrads[graph.slots[i].weight.unwrap()] = gw;
                if let Some(bi) = graph.slots[i].bias {
                    pgrads[bi] = gb;
                }
            }
            Op::Relu => {
                let gx: Vec<T> = gy
                    .iter()
                    .zip(x)
                    .map(|(&g, &v)| if v.value() > 0.0 { g } else { T::zero() })
                    .collect();
                accumulate(&mut ngrads, src, &gx);
            }
            Op::BatchNorm { channels, .. } => match mode {
                NormMode::Bypass => accumulate(&mut ngrads, src, &gy),
                NormMode::Batch => {
                    let spatial = in_shape[1..].iter().product();
                    let cache = trace.norm[i].as_ref().expect("norm cache");
                    let (gx, gg, gb) = kernels::batchnorm_backward(&gy, cache, weight(i), batch, *channels, spatial);
                    accumulate(&mut ngrads, src, &gx);
                    if let (Some(wi), Some(bi)) = (graph.slots[i].weight, graph.slots[i].bias) {
                        pgrads[wi] = gg;
                        pgrads[bi] = gb;
                    }
                }
            },
            Op::AvgPool { .. } => {
                let gx = kernels::avgpool_backward(&gy, batch * in_shape[0], graph.windows[i].as_ref().unwrap());
                accumulate(&mut ngrads, src, &gx);
            }
            Op::Add => {
                for &j in &node.inputs {
                    accumulate(&mut ngrads, j, &gy);
                }
            }
            Op::Zero => {}
            Op::GlobalAvgPool => {
                let spatial = in_shape[1] * in_shape[2];
                let scale = T::from_f64(1.0 / spatial as f64);
                let mut gx = vec![T::zero(); x.len()];
                for (plane, &g) in gx.chunks_mut(spatial).zip(&gy) {
                    let v = g * scale;
                    plane.iter_mut().for_each(|p| *p = v);
                }
                accumulate(&mut ngrads, src, &gx);
            }
            Op::Flatten => accumulate(&mut ngrads, src, &gy),
            Op::GraphConv {
                nodes,
                adjacency,
                in_features,
                out_features,
            } => {
                let (gx, gw, gb) = kernels::graphconv_backward(
                    x,
                    adjacency,
                    weight(i).unwrap(),
                    &gy,
                    batch * in_shape[0],
                    *nodes,
                    *in_features,
                    *out_features,
                );
                accumulate(&mut ngrads, src, &gx);
                pgrads[graph.slots[i].weight.unwrap()] = gw;
                pgrads[graph.slots[i].bias.unwrap()] = gb;
            }
            Op::NodeMean => {
                let (g, nn, f) = (in_shape[0], in_shape[1], in_shape[2]);
                let scale = T::from_f64(1.0 / nn as f64);
                let mut gx = vec![T::zero(); x.len()];
                for bg in 0..batch * g {
                    for k in 0..nn {
                        for c in 0..f {
                            gx[(bg * nn + k) * f + c] = gy[bg * f + c] * scale;
                        }
                    }
                }
                accumulate(&mut ngrads, src, &gx);
            }
        }
        ngrads[i] = gy;
    }
    (pgrads, ngrads)
}
