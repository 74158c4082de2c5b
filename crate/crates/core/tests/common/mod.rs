#![allow(dead_code)]

pub mod stats;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zcnas::engine::{GraphSpec, InitConfig, InitScheme, LossSpec, Network, Op, ParamSet, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// A tiny randomly-shaped network. `variant` picks the template so that a
/// run over consecutive variants exercises every operator kind.
pub struct TinyNet {
    pub net: Network,
    pub batch: Tensor,
    pub loss: LossSpec,
}

pub fn tiny_net(variant: usize, seed: u64) -> TinyNet {
    let mut r = rng(seed);
    let batch_size = r.random_range(3..5);
    let classes = r.random_range(2..4);
    let mut g = GraphSpec::new();
    let input_shape: Vec<usize>;
    match variant % 3 {
        0 => {
            let cin = r.random_range(1..3);
            let hw = r.random_range(4..6);
            let c = r.random_range(2..4);
            input_shape = vec![cin, hw, hw];
            let x = g.push("x", Op::Input { shape: input_shape.clone() }, &[]);
            let a = g.push("stem", conv(cin, c, 3, 1, 1, true), &[x]);
            let a = g.push("bn", Op::BatchNorm { channels: c, affine: true }, &[a]);
            let a = g.push("act", Op::Relu, &[a]);
            let p = g.push("pool", Op::AvgPool { kernel: 3, stride: 1, padding: 1 }, &[a]);
            let q = g.push("pw", conv(c, c, 1, 1, 0, false), &[a]);
            let z = g.push("none", Op::Zero, &[a]);
            let s = g.push("sum", Op::Add, &[p, q, z, a]);
            let d = g.push("down", conv(c, c, 3, 2, 1, false), &[s]);
            let gp = g.push("gap", Op::GlobalAvgPool, &[d]);
            g.push(
                "fc",
                Op::Linear {
                    in_features: c,
                    out_features: classes,
                    bias: true,
                },
                &[gp],
            );
        }
        1 => {
            let hw = r.random_range(2..4);
            let c = r.random_range(1..3);
            input_shape = vec![c, hw, hw];
            let x = g.push("x", Op::Input { shape: input_shape.clone() }, &[]);
            let a = g.push("conv", conv(c, 2, 2, 1, 0, true), &[x]);
            let a = g.push("bn", Op::BatchNorm { channels: 2, affine: false }, &[a]);
            let a = g.push("act", Op::Relu, &[a]);
            let a = g.push("flat", Op::Flatten, &[a]);
            let n = 2 * (hw - 1) * (hw - 1);
            let h = g.push(
                "hidden",
                Op::Linear {
                    in_features: n,
                    out_features: 4,
                    bias: false,
                },
                &[a],
            );
            let h = g.push("act2", Op::Relu, &[h]);
            g.push(
                "fc",
                Op::Linear {
                    in_features: 4,
                    out_features: classes,
                    bias: true,
                },
                &[h],
            );
        }
        _ => {
            let nodes = 3;
            let f = r.random_range(2..4);
            let mut adj = vec![0.0; nodes * nodes];
            for v in adj.iter_mut() {
                *v = r.random_range(0.0..1.0);
            }
            input_shape = vec![1, nodes, f];
            let x = g.push("x", Op::Input { shape: input_shape.clone() }, &[]);
            let a = g.push(
                "gc1",
                Op::GraphConv {
                    nodes,
                    adjacency: adj.clone(),
                    in_features: f,
                    out_features: 3,
                },
                &[x],
            );
            let a = g.push("act", Op::Relu, &[a]);
            let a = g.push(
                "gc2",
                Op::GraphConv {
                    nodes,
                    adjacency: adj,
                    in_features: 3,
                    out_features: 3,
                },
                &[a],
            );
            let a = g.push("mean", Op::NodeMean, &[a]);
            let a = g.push("flat", Op::Flatten, &[a]);
            g.push(
                "fc",
                Op::Linear {
                    in_features: 3,
                    out_features: classes,
                    bias: true,
                },
                &[a],
            );
        }
    }
    let init = InitConfig {
        scheme: InitScheme::KaimingNormal,
        seed: r.random(),
        ..Default::default()
    };
    let net = Network::build(&g, &init).unwrap();
    let mut shape = vec![batch_size];
    shape.extend(input_shape);
    let batch = random_tensor(&mut r, &shape);
    let targets: Vec<usize> = (0..batch_size).map(|_| r.random_range(0..classes)).collect();
    TinyNet {
        net,
        batch,
        loss: LossSpec::cross_entropy(&targets),
    }
}

pub fn conv(cin: usize, cout: usize, kernel: usize, stride: usize, padding: usize, bias: bool) -> Op {
    Op::Conv2d {
        in_channels: cin,
        out_channels: cout,
        kernel,
        stride,
        padding,
        bias,
    }
}

/// Parameters flattened in key order.
pub fn flatten(set: &ParamSet) -> Vec<f64> {
    set.values().flat_map(|t| t.data().iter().copied()).collect()
}

pub fn unflatten(like: &ParamSet, flat: &[f64]) -> ParamSet {
    let mut off = 0;
    like.iter()
        .map(|(k, t)| {
            let n = t.len();
            let v = Tensor::new(t.shape().to_vec(), flat[off..off + n].to_vec()).unwrap();
            off += n;
            (k.clone(), v)
        })
        .collect()
}

pub fn set_all(net: &mut Network, set: &ParamSet) {
    for (k, t) in set {
        net.set_param(k, t).unwrap();
    }
}

/// Central finite-difference gradient of the loss.
pub fn fd_gradient(net: &mut Network, loss: &LossSpec, batch: &Tensor, h: f64) -> Vec<f64> {
    let base = net.param_set();
    let theta = flatten(&base);
    let mut grad = vec![0.0; theta.len()];
    for j in 0..theta.len() {
        let mut t = theta.clone();
        t[j] = theta[j] + h;
        set_all(net, &unflatten(&base, &t));
        let lp = net.loss(loss, batch).unwrap();
        t[j] = theta[j] - h;
        set_all(net, &unflatten(&base, &t));
        let lm = net.loss(loss, batch).unwrap();
        grad[j] = (lp - lm) / (2.0 * h);
    }
    set_all(net, &base);
    grad
}

/// Hessian assembled column by column from central differences of the
/// analytic gradient. Row-major `n×n`.
pub fn explicit_hessian(net: &mut Network, loss: &LossSpec, batch: &Tensor, h: f64) -> Vec<Vec<f64>> {
    let base = net.param_set();
    let theta = flatten(&base);
    let n = theta.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut t = theta.clone();
        t[j] = theta[j] + h;
        set_all(net, &unflatten(&base, &t));
        let gp = flatten(&net.backward(loss, batch).unwrap().params);
        t[j] = theta[j] - h;
        set_all(net, &unflatten(&base, &t));
        let gm = flatten(&net.backward(loss, batch).unwrap().params);
        cols.push(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<f64>>());
    }
    set_all(net, &base);
    (0..n).map(|i| (0..n).map(|j| 0.5 * (cols[j][i] + cols[i][j])).collect()).collect()
}

pub fn matvec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `max_i |a_i − b_i| / max(|a_i|, |b_i|, floor)`.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// `‖a − b‖₂ / max(‖b‖₂, tiny)`.
pub fn rel_norm_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    num / den.max(1e-300)
}
