mod common;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use zcnas::engine::{GraphSpec, InitConfig, LossSpec, Network, Op, Tensor};
use zcnas::proxy::{self, Batch, DataMode, Metric, ParamScope, ProxyConfig, ProxyError, ScoreCache, ScoreRequest};
use zcnas::space::{Architecture, CellOp, ScaleConfig, SpaceSpec};

const W: ParamScope = ParamScope::Weights;
const ALL: ParamScope = ParamScope::AllTrainable;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn half_sq(n: usize) -> LossSpec {
    LossSpec::HalfSquaredError { targets: vec![0.0; n] }
}

/// Bias-free scalar chain `x → w₁ → w₂ → …`.
fn chain(weights: &[f64]) -> Network {
    let mut g = GraphSpec::new();
    let mut h = g.push("x", Op::Input { shape: vec![1] }, &[]);
    for i in 0..weights.len() {
        h = g.push(
            format!("l{i}"),
            Op::Linear {
                in_features: 1,
                out_features: 1,
                bias: false,
            },
            &[h],
        );
    }
    let mut net = Network::build(&g, &InitConfig::default()).unwrap();
    for (i, &w) in weights.iter().enumerate() {
        net.set_param(&format!("l{i}.weight"), &t(&[1, 1], &[w])).unwrap();
    }
    net
}

#[test]
fn grad_norm_hand_value() {
    let mut net = chain(&[1.0]);
    let v = proxy::grad_norm(&mut net, &half_sq(1), &t(&[1, 1], &[2.0]), W).unwrap();
    assert_eq!(v, 4.0);
}

#[test]
fn grad_norm_of_all_none_cell() {
    let space = SpaceSpec::default();
    let scale = ScaleConfig::default();
    let arch = Architecture::uniform(&space, CellOp::None).unwrap();
    let mut net = zcnas::space::materialize(&space, &arch, &scale, &InitConfig::with_seed(3)).unwrap();
    let batch = Batch::synthetic(DataMode::RandomBatch, &[3, 8, 8], 4, 8, 1);
    let loss = LossSpec::cross_entropy(&batch.targets);
    assert_eq!(proxy::grad_norm(&mut net, &loss, &batch.inputs, W).unwrap(), 0.0);
    // Only the classifier bias receives gradient: the batch mean of softmax − onehot.
    let bias = net.param("classifier.bias").unwrap();
    let z: f64 = bias.data().iter().map(|b| b.exp()).sum();
    let mut g = vec![0.0; 4];
    for &target in &batch.targets {
        for k in 0..4 {
            g[k] += (bias.data()[k].exp() / z - if k == target { 1.0 } else { 0.0 }) / 8.0;
        }
    }
    let expected = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let got = proxy::grad_norm(&mut net, &loss, &batch.inputs, ALL).unwrap();
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
}

#[test]
fn grad_norm_ignores_parameter_names() {
    let build = |names: [&str; 2]| {
        let mut g = GraphSpec::new();
        let x = g.push("x", Op::Input { shape: vec![3] }, &[]);
        let h = g.push(
            names[0],
            Op::Linear {
                in_features: 3,
                out_features: 4,
                bias: true,
            },
            &[x],
        );
        let h = g.push("act", Op::Relu, &[h]);
        g.push(
            names[1],
            Op::Linear {
                in_features: 4,
                out_features: 2,
                bias: true,
            },
            &[h],
        );
        g
    };
    let mut a = Network::build(&build(["alpha", "omega"]), &InitConfig::with_seed(2)).unwrap();
    let mut b = Network::build(&build(["zulu", "bravo"]), &InitConfig::with_seed(2)).unwrap();
    let x = random_tensor(&mut rng(0), &[5, 3]);
    let loss = LossSpec::cross_entropy(&[0, 1, 1, 0, 1]);
    let ga = proxy::grad_norm(&mut a, &loss, &x, ALL).unwrap();
    let gb = proxy::grad_norm(&mut b, &loss, &x, ALL).unwrap();
    assert!((ga - gb).abs() <= 1e-14 * ga.abs());
}

#[test]
fn snip_hand_values() {
    let mut net = chain(&[1.0]);
    let x = t(&[1, 1], &[2.0]);
    assert_eq!(proxy::snip(&mut net, &half_sq(1), &x, W).unwrap(), 4.0);
    net.set_param("l0.weight", &t(&[1, 1], &[0.0])).unwrap();
    assert_eq!(proxy::snip(&mut net, &half_sq(1), &x, W).unwrap(), 0.0);
}

#[test]
fn snip_quadruples_when_parameters_double() {
    for (w, x) in [(0.7, 1.3), (-2.0, 0.5), (3.0, -1.0)] {
        let base = proxy::snip(&mut chain(&[w]), &half_sq(1), &t(&[1, 1], &[x]), W).unwrap();
        let doubled = proxy::snip(&mut chain(&[2.0 * w]), &half_sq(1), &t(&[1, 1], &[x]), W).unwrap();
        assert!((doubled - 4.0 * base).abs() <= 1e-15 * doubled);
        assert!((base - w * w * x * x).abs() <= 1e-15 * base);
    }
}

#[test]
fn grasp_hand_values() {
    let mut net = chain(&[2.0]);
    assert_eq!(proxy::grasp(&mut net, &half_sq(1), &t(&[1, 1], &[1.0]), W).unwrap(), -4.0);
    let mut tn = tiny_net(0, 4);
    tn.net.map_params(|_, _| 0.0);
    assert_eq!(proxy::grasp(&mut tn.net, &tn.loss, &tn.batch, ALL).unwrap(), 0.0);
}

#[test]
fn grasp_matches_explicit_hessian() {
    for i in 0..6 {
        let mut tn = tiny_net(i, 300 + i as u64);
        let theta = flatten(&tn.net.param_set());
        let g = flatten(&tn.net.backward(&tn.loss, &tn.batch).unwrap().params);
        let h = explicit_hessian(&mut tn.net, &tn.loss, &tn.batch, 1e-5);
        let hg = matvec(&h, &g);
        let expected: f64 = -hg.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>();
        let got = proxy::grasp(&mut tn.net, &tn.loss, &tn.batch, ALL).unwrap();
        assert!((got - expected).abs() <= 1e-3 * expected.abs().max(1e-12), "{got} vs {expected}");
    }
}

#[test]
fn synflow_two_layer_chain() {
    let mut net = chain(&[2.0, 3.0]);
    let grads = {
        let mut n = chain(&[2.0, 3.0]);
        n.backward(&LossSpec::SynflowProduct, &t(&[1, 1], &[1.0])).unwrap()
    };
    assert_eq!(grads.params["l0.weight"].data()[0] * 2.0, 6.0);
    assert_eq!(grads.params["l1.weight"].data()[0] * 3.0, 6.0);
    assert_eq!(proxy::synflow(&mut net, W, false).unwrap(), 12.0);
    assert_eq!(net.param("l0.weight").unwrap().data(), &[2.0]);
}

#[test]
fn synflow_uses_magnitudes_and_restores() {
    let mut net = chain(&[-2.0, 3.0, -0.5]);
    assert_eq!(proxy::synflow(&mut net, W, false).unwrap(), 9.0);
    assert_eq!(net.param("l0.weight").unwrap().data(), &[-2.0]);
    let mut net = chain(&[2.0, 0.0, 5.0]);
    assert_eq!(proxy::synflow(&mut net, W, false).unwrap(), 0.0);
}

#[test]
fn synflow_scales_with_constant_input() {
    let mut net = chain(&[1.5, 0.25, 4.0]);
    let ones = proxy::synflow(&mut net, W, false).unwrap();
    for c in [2.0, 0.5, 8.0] {
        assert_eq!(proxy::synflow_with_input(&mut net, W, c).unwrap(), c * ones);
    }
}

#[test]
fn synflow_overflow_and_log_domain() {
    let mut net = chain(&[1e100; 8]);
    assert!(matches!(proxy::synflow(&mut net, W, false), Err(ProxyError::Overflow)));
    let log = proxy::synflow(&mut net, W, true).unwrap();
    let expected = 8f64.ln() + 800.0 * 10f64.ln();
    assert!((log - expected).abs() < 1e-9 * expected, "{log} vs {expected}");
    let mut small = chain(&[2.0, 3.0]);
    assert!((proxy::synflow(&mut small, W, true).unwrap() - 13f64.ln()).abs() < 1e-14);
}

#[test]
fn fisher_single_activation() {
    let mut net = chain(&[1.0]);
    assert_eq!(proxy::fisher(&mut net, &half_sq(1), &t(&[1, 1], &[2.0])).unwrap(), 16.0);
}

#[test]
fn fisher_matches_symbolic_two_layer_net() {
    let mut g = GraphSpec::new();
    let x = g.push("x", Op::Input { shape: vec![2] }, &[]);
    let h = g.push(
        "l1",
        Op::Linear {
            in_features: 2,
            out_features: 2,
            bias: true,
        },
        &[x],
    );
    let a = g.push("act", Op::Relu, &[h]);
    g.push(
        "l2",
        Op::Linear {
            in_features: 2,
            out_features: 1,
            bias: true,
        },
        &[a],
    );
    let mut net = Network::build(&g, &InitConfig::default()).unwrap();
    let (w1, b1, w2, b2) = ([[0.5, -1.0], [1.5, 0.25]], [0.1, -0.2], [2.0, -3.0], 0.3);
    net.set_param("l1.weight", &t(&[2, 2], &[w1[0][0], w1[0][1], w1[1][0], w1[1][1]]))
        .unwrap();
    net.set_param("l1.bias", &t(&[2], &b1)).unwrap();
    net.set_param("l2.weight", &t(&[1, 2], &w2)).unwrap();
    net.set_param("l2.bias", &t(&[1], &[b2])).unwrap();
    let xs = [[1.0, 0.5], [-0.4, 2.0], [0.3, -0.6]];
    let targets = [1.0, -1.0, 0.5];
    let batch = t(&[3, 2], &xs.concat());
    let loss = LossSpec::HalfSquaredError { targets: targets.to_vec() };

    let mut s1 = [0.0; 2];
    let mut s2 = 0.0;
    for (x, tgt) in xs.iter().zip(targets) {
        let z1 = [
            w1[0][0] * x[0] + w1[0][1] * x[1] + b1[0],
            w1[1][0] * x[0] + w1[1][1] * x[1] + b1[1],
        ];
        let a1 = [z1[0].max(0.0), z1[1].max(0.0)];
        let z2 = w2[0] * a1[0] + w2[1] * a1[1] + b2;
        let g2 = z2 - tgt;
        s2 += g2 * z2;
        for c in 0..2 {
            let g1 = if z1[c] > 0.0 { w2[c] * g2 } else { 0.0 };
            s1[c] += g1 * z1[c];
        }
    }
    let expected = s1[0] * s1[0] + s1[1] * s1[1] + s2 * s2;
    let got = proxy::fisher(&mut net, &loss, &batch).unwrap();
    assert!((got - expected).abs() <= 1e-12 * expected, "{got} vs {expected}");
}

#[test]
fn fisher_dead_channel_contributes_nothing() {
    let mut g = GraphSpec::new();
    let x = g.push("x", Op::Input { shape: vec![1, 3, 3] }, &[]);
    let c = g.push("conv", conv(1, 2, 3, 1, 1, false), &[x]);
    let p = g.push("gap", Op::GlobalAvgPool, &[c]);
    g.push(
        "fc",
        Op::Linear {
            in_features: 2,
            out_features: 2,
            bias: false,
        },
        &[p],
    );
    let mut net = Network::build(&g, &InitConfig::with_seed(1)).unwrap();
    let batch = random_tensor(&mut rng(3), &[2, 1, 3, 3]);
    let loss = LossSpec::cross_entropy(&[0, 1]);
    let mut w = net.param("conv.weight").unwrap();
    w.data_mut()[9..].iter_mut().for_each(|v| *v = 0.0);
    net.set_param("conv.weight", &w).unwrap();
    let with_dead = proxy::fisher(&mut net, &loss, &batch).unwrap();
    // The dead channel's activations are zero; its saliency term vanishes,
    // so zeroing its outgoing weights changes nothing else in the sum.
    let grads = net.backward(&loss, &batch).unwrap();
    let z = net.activation("conv").unwrap().clone();
    let gz = &grads.activations["conv"];
    let live: f64 = (0..2).map(|b| (0..9).map(|s| z.data()[b * 18 + s] * gz.data()[b * 18 + s]).sum::<f64>()).sum();
    let out = net.activation("fc").unwrap().clone();
    let gout = &grads.activations["fc"];
    let head: f64 = (0..2)
        .map(|c| (0..2).map(|b| out.data()[b * 2 + c] * gout.data()[b * 2 + c]).sum::<f64>().powi(2))
        .sum();
    assert!((with_dead - (live * live + head)).abs() <= 1e-12 * with_dead);
}

fn identical_rows_score(b: usize, k: f64) -> f64 {
    let bf = b as f64;
    -((bf + k).ln() + 1.0 / (bf + k)) - (bf - 1.0) * (k.ln() + 1.0 / k)
}

#[test]
fn jacob_cov_eigenstructure_cases() {
    let k = 1e-5;
    let rows: Vec<Vec<f64>> = (0..4).map(|_| vec![0.3, -1.0, 2.0, 0.7]).collect();
    let got = proxy::jacob_cov_from_rows(&rows, k).unwrap();
    let expected = identical_rows_score(4, k);
    assert!((got - expected).abs() <= 1e-8 * expected.abs(), "{got} vs {expected}");

    let rows = vec![
        vec![1.0, -1.0, 0.0, 0.0, 0.0, 0.0],
        vec![0.0, 0.0, 1.0, -1.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0, 0.0, 1.0, -1.0],
    ];
    let got = proxy::jacob_cov_from_rows(&rows, k).unwrap();
    let expected = -3.0 * ((1.0 + k).ln() + 1.0 / (1.0 + k));
    assert!((got - expected).abs() <= 1e-8 * expected.abs());
    let scaled: Vec<Vec<f64>> = rows.iter().zip([3.0, 0.1, 7.0]).map(|(r, s)| r.iter().map(|v| v * s).collect()).collect();
    assert!((proxy::jacob_cov_from_rows(&scaled, k).unwrap() - got).abs() < 1e-12);
}

#[test]
fn jacob_cov_on_networks() {
    let k = 1e-5;
    // A linear map has the same input gradient for every sample.
    let mut g = GraphSpec::new();
    let x = g.push("x", Op::Input { shape: vec![5] }, &[]);
    g.push(
        "fc",
        Op::Linear {
            in_features: 5,
            out_features: 3,
            bias: true,
        },
        &[x],
    );
    let mut net = Network::build(&g, &InitConfig::with_seed(8)).unwrap();
    let batch = random_tensor(&mut rng(1), &[6, 5]);
    let got = proxy::jacob_cov(&mut net, &batch, k).unwrap();
    let expected = identical_rows_score(6, k);
    assert!((got - expected).abs() <= 1e-8 * expected.abs());

    // ReLU gates with disjoint active blocks give orthogonal zero-mean rows.
    let mut g = GraphSpec::new();
    let x = g.push("x", Op::Input { shape: vec![6] }, &[]);
    let a = g.push("act", Op::Relu, &[x]);
    g.push(
        "fc",
        Op::Linear {
            in_features: 6,
            out_features: 1,
            bias: false,
        },
        &[a],
    );
    let mut net = Network::build(&g, &InitConfig::default()).unwrap();
    net.set_param("fc.weight", &t(&[1, 6], &[1.0, -1.0, 2.0, -2.0, 0.5, -0.5])).unwrap();
    let mut data = vec![-1.0; 18];
    for b in 0..3 {
        data[b * 6 + 2 * b] = 1.0;
        data[b * 6 + 2 * b + 1] = 1.0;
    }
    let got = proxy::jacob_cov(&mut net, &t(&[3, 6], &data), k).unwrap();
    let expected = -3.0 * ((1.0 + k).ln() + 1.0 / (1.0 + k));
    assert!((got - expected).abs() <= 1e-8 * expected.abs());
}

#[test]
fn jacob_cov_flags_zero_variance() {
    let rows = vec![vec![1.0, 2.0], vec![3.0, 3.0]];
    assert!(matches!(proxy::jacob_cov_from_rows(&rows, 1e-5), Err(ProxyError::Degenerate(_))));
}

fn triple(s: f64, j: f64, n: f64) -> BTreeMap<Metric, f64> {
    BTreeMap::from([(Metric::Synflow, s), (Metric::JacobCov, j), (Metric::Snip, n)])
}

#[test]
fn vote_compare_cases() {
    let a = triple(3.0, 2.0, 1.0);
    assert_eq!(proxy::vote_compare(&a, &triple(1.0, 1.0, 0.0)).unwrap(), Ordering::Greater);
    assert_eq!(proxy::vote_compare(&a, &triple(1.0, 5.0, 0.0)).unwrap(), Ordering::Greater);
    assert_eq!(proxy::vote_compare(&a, &a).unwrap(), Ordering::Equal);
    // one win, one loss, one tie: 1.5 points each
    assert_eq!(proxy::vote_compare(&a, &triple(1.0, 5.0, 1.0)).unwrap(), Ordering::Equal);
    let mut bad = a.clone();
    bad.insert(Metric::Fisher, 1.0);
    assert!(matches!(proxy::vote_compare(&a, &bad), Err(ProxyError::MetricMismatch(_))));
}

#[test]
fn vote_rank_follows_unanimous_order() {
    let models: Vec<_> = (0..6)
        .map(|i| (format!("m{i}"), triple(i as f64, 10.0 * i as f64, -1.0 / (1.0 + i as f64))))
        .collect();
    assert_eq!(proxy::vote_rank(&models).unwrap(), vec![5, 4, 3, 2, 1, 0]);
}

#[test]
fn vote_rank_condorcet_cycle() {
    // a beats b, b beats c, c beats a: Copeland scores tie, synflow decides.
    let models = vec![
        ("a".to_string(), triple(3.0, 1.0, 2.0)),
        ("b".to_string(), triple(2.0, 3.0, 1.0)),
        ("c".to_string(), triple(1.0, 2.0, 3.0)),
    ];
    let get = |i: usize, j: usize| proxy::vote_compare(&models[i].1, &models[j].1).unwrap();
    assert_eq!(get(0, 1), Ordering::Greater);
    assert_eq!(get(1, 2), Ordering::Greater);
    assert_eq!(get(2, 0), Ordering::Greater);
    let order = proxy::vote_rank(&models).unwrap();
    assert_eq!(order, vec![0, 1, 2]);
    assert_eq!(proxy::vote_rank(&models).unwrap(), order);
}

#[test]
fn vote_rank_matches_brute_force_wins() {
    let mut r = rng(21);
    for _ in 0..20 {
        let models: Vec<_> = (0..10)
            .map(|i| {
                let q = |r: &mut rand_chacha::ChaCha8Rng| r.random_range(0..4) as f64;
                (format!("m{i}"), triple(q(&mut r), q(&mut r), q(&mut r)))
            })
            .collect();
        let order = proxy::vote_rank(&models).unwrap();
        let mut wins = vec![0.0; 10];
        for i in 0..10 {
            for j in 0..10 {
                if i == j {
                    continue;
                }
                let mut pts = 0.0;
                for m in [Metric::Synflow, Metric::JacobCov, Metric::Snip] {
                    let (x, y) = (models[i].1[&m], models[j].1[&m]);
                    pts += if x > y { 1.0 } else if x == y { 0.5 } else { 0.0 };
                }
                wins[i] += if pts > 1.5 { 1.0 } else if pts == 1.5 { 0.5 } else { 0.0 };
            }
        }
        for w in order.windows(2) {
            let (a, b) = (w[0], w[1]);
            let sa = models[a].1[&Metric::Synflow];
            let sb = models[b].1[&Metric::Synflow];
            assert!(
                wins[a] > wins[b] || (wins[a] == wins[b] && (sa > sb || (sa == sb && models[a].0 < models[b].0))),
                "{a} before {b}"
            );
        }
    }
}

fn request(mode: DataMode) -> ScoreRequest {
    let mut req = ScoreRequest::new(SpaceSpec::default(), ScaleConfig::default());
    req.proxy = ProxyConfig {
        batch_size: 16,
        data_mode: mode,
        ..Default::default()
    };
    req
}

#[test]
fn score_single_metric_and_cache() {
    let req = request(DataMode::RandomBatch);
    let cache = ScoreCache::new();
    let arch = req.space.from_index(4321);
    let first = proxy::score(&arch, &req, &[Metric::Synflow], None, &cache).unwrap();
    assert_eq!(first.len(), 1);
    assert_eq!(cache.len(), 1);
    let second = proxy::score(&arch, &req, &[Metric::Synflow], None, &cache).unwrap();
    assert_eq!(first, second);
    assert_eq!(cache.len(), 1);
    assert_eq!(
        first[&Metric::Synflow].value.unwrap().to_bits(),
        second[&Metric::Synflow].value.unwrap().to_bits()
    );
}

#[test]
fn score_all_none_architecture() {
    let req = request(DataMode::RandomBatch);
    let cache = ScoreCache::new();
    let arch = Architecture::uniform(&req.space, CellOp::None).unwrap();
    let out = proxy::score(&arch, &req, &Metric::ALL, None, &cache).unwrap();
    assert_eq!(out.len(), 6);
    assert_eq!(out[&Metric::Synflow].value, Some(0.0));
    let jc = &out[&Metric::JacobCov];
    assert!(jc.value.is_none());
    assert!(jc.error.as_deref().unwrap().contains("degenerate"), "{:?}", jc.error);
}

#[test]
fn score_requires_real_batch_when_asked() {
    let req = request(DataMode::RealBatch);
    let arch = req.space.from_index(1);
    assert!(matches!(
        proxy::score(&arch, &req, &[Metric::Snip], None, &ScoreCache::new()),
        Err(ProxyError::MissingBatch)
    ));
    // synflow needs no data at all
    assert!(proxy::score(&arch, &req, &[Metric::Synflow], None, &ScoreCache::new()).is_ok());
}

#[test]
fn synflow_ignores_data_mode() {
    let arch = SpaceSpec::default().from_index(9876);
    let real = Batch::synthetic(DataMode::RandomBatch, &[3, 8, 8], 4, 16, 99);
    let values: Vec<f64> = [DataMode::RealBatch, DataMode::RandomBatch, DataMode::OnesBatch]
        .into_iter()
        .map(|m| {
            let out = proxy::score(&arch, &request(m), &[Metric::Synflow], Some(&real), &ScoreCache::new()).unwrap();
            out[&Metric::Synflow].value.unwrap()
        })
        .collect();
    assert!(values.iter().all(|v| v.to_bits() == values[0].to_bits()));
}

#[test]
fn metric_order_does_not_matter() {
    let req = request(DataMode::RandomBatch);
    let arch = req.space.from_index(777);
    let fwd = proxy::score(&arch, &req, &Metric::ALL, None, &ScoreCache::new()).unwrap();
    let mut rev = Metric::ALL.to_vec();
    rev.reverse();
    let back = proxy::score(&arch, &req, &rev, None, &ScoreCache::new()).unwrap();
    assert_eq!(fwd, back);
}

#[test]
fn score_file_round_trip() {
    let req = request(DataMode::RandomBatch);
    let cache = ScoreCache::new();
    for i in [0, 5, 15624] {
        proxy::score(&req.space.from_index(i), &req, &Metric::ALL, None, &cache).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.jsonl");
    cache.save(&path).unwrap();
    let back = ScoreCache::load(&path).unwrap();
    assert_eq!(back.entries(), cache.entries());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with(r#"{"format":"zcnas-scores","version":1}"#));
    assert!(text.contains(r#""value":"failed""#));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn nonnegative_metrics(i in 0u64..15625, seed in 0u64..100) {
        let mut req = request(DataMode::RandomBatch);
        req.init = InitConfig::with_seed(seed);
        let out = proxy::score(&req.space.from_index(i), &req, &Metric::ALL, None, &ScoreCache::new()).unwrap();
        for m in [Metric::Snip, Metric::GradNorm, Metric::Fisher, Metric::Synflow] {
            if let Some(v) = out[&m].value {
                prop_assert!(v >= 0.0, "{} = {}", m, v);
            }
        }
    }

    #[test]
    fn vote_agrees_with_unanimous_metrics(a in proptest::array::uniform3(-5i32..5), b in proptest::array::uniform3(-5i32..5)) {
        let ta = triple(a[0] as f64, a[1] as f64, a[2] as f64);
        let tb = triple(b[0] as f64, b[1] as f64, b[2] as f64);
        let all_greater = (0..3).all(|i| a[i] > b[i]);
        let all_less = (0..3).all(|i| a[i] < b[i]);
        let v = proxy::vote_compare(&ta, &tb).unwrap();
        if all_greater { prop_assert_eq!(v, Ordering::Greater); }
        if all_less { prop_assert_eq!(v, Ordering::Less); }
    }
}

/// Rankings of 20 mini-space architectures agree across init seeds, scored
/// on one real minibatch of the mini-bench dataset.
#[test]
fn rankings_are_stable_across_init_seeds() {
    let space = SpaceSpec::mini();
    let data = zcnas::bench::MinibenchConfig::default().dataset().unwrap();
    let mut r = rng(1);
    let archs: Vec<Architecture> = (0..20).map(|_| space.random(&mut r)).collect();
    let batch = data.train.gather(&(0..ProxyConfig::default().batch_size).collect::<Vec<_>>());
    let mut by_seed = Vec::new();
    for seed in [11, 12] {
        let mut req = ScoreRequest::new(space.clone(), ScaleConfig::default());
        req.init.seed = seed;
        let cache = ScoreCache::new();
        let rows: Vec<_> = archs
            .iter()
            .map(|a| proxy::score(a, &req, &Metric::ALL, Some(&batch), &cache).unwrap())
            .collect();
        by_seed.push(rows);
    }
    let mut unstable = Vec::new();
    for m in Metric::ALL {
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for i in 0..archs.len() {
            if let (Some(a), Some(b)) = (by_seed[0][i][&m].value, by_seed[1][i][&m].value) {
                x.push(a);
                y.push(b);
            }
        }
        let rho = zcnas::analysis::spearman(&x, &y).unwrap();
        println!("{}: rho {rho:.3} over {}", m.id(), x.len());
        if rho < 0.9 {
            unstable.push(format!("{} {rho:.3}", m.id()));
        }
    }
    assert!(unstable.is_empty(), "seed-unstable rankings: {}", unstable.join(", "));
}
