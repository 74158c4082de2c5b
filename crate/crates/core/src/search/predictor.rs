use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ProxyOracle, SearchConfig, SearchError, SearchTrace, Session};
use crate::bench::TabularBenchmark;
use crate::engine::{EngineError, GraphSpec, InitConfig, LossSpec, Network, Op, SgdConfig, Tensor};
use crate::space::{Architecture, SpaceSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    /// Models trained per round.
    pub per_round: usize,
    /// Random untrained architectures ranked each round.
    pub candidates: usize,
    pub hidden: usize,
    /// Passes of `steps` minibatches each, per (re)training.
    pub epochs: usize,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub momentum: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            per_round: 10,
            candidates: 1000,
            hidden: 32,
            epochs: 10,
            steps: 50,
            batch: 32,
            lr: 0.05,
            momentum: 0.9,
        }
    }
}

/// Ordered pair of indices into an architecture list; `first_wins` marks
/// the better-ranked member.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pair {
    pub first: usize,
    pub second: usize,
    pub first_wins: bool,
}

/// Number of unordered pairs among `n` models.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// All pairs of a ranking given best first, each in random order.
pub fn ranked_pairs(order: &[usize], rng: &mut impl Rng) -> Vec<Pair> {
    let mut out = Vec::with_capacity(pair_count(order.len()));
    for (i, &better) in order.iter().enumerate() {
        for &worse in &order[i + 1..] {
            out.push(if rng.random::<bool>() {
                Pair { first: better, second: worse, first_wins: true }
            } else {
                Pair { first: worse, second: better, first_wins: false }
            });
        }
    }
    out
}

/// Binary relation predictor: a two-layer graph convolution over the cell's
/// edges (adjacent when they share a node) with op and position one-hot
/// features, mean-pooled to an embedding; a linear head on the two
/// concatenated embeddings gives the probability that the first wins.
#[derive(Clone, Debug)]
pub struct PairPredictor {
    space: SpaceSpec,
    net: Network,
    hidden: usize,
}

impl PairPredictor {
    pub fn new(space: &SpaceSpec, hidden: usize, seed: u64) -> Result<Self, EngineError> {
        let edges = space.edges();
        let n = edges.len();
        let f = space.ops.len() + n;
        let mut adj = vec![0.0; n * n];
        for (i, a) in edges.iter().enumerate() {
            let row: Vec<usize> = (0..n)
                .filter(|&j| {
                    let b = edges[j];
                    i == j || a.0 == b.0 || a.0 == b.1 || a.1 == b.0 || a.1 == b.1
                })
                .collect();
            for &j in &row {
                adj[i * n + j] = 1.0 / row.len() as f64;
            }
        }
        let mut g = GraphSpec::new();
        let x = g.push("input", Op::Input { shape: vec![2, n, f] }, &[]);
        let c1 = g.push(
            "gc1",
            Op::GraphConv { nodes: n, adjacency: adj.clone(), in_features: f, out_features: hidden },
            &[x],
        );
        let r1 = g.push("relu1", Op::Relu, &[c1]);
        let c2 = g.push(
            "gc2",
            Op::GraphConv { nodes: n, adjacency: adj, in_features: hidden, out_features: hidden },
            &[r1],
        );
        let r2 = g.push("relu2", Op::Relu, &[c2]);
        let m = g.push("embed", Op::NodeMean, &[r2]);
        let fl = g.push("flat", Op::Flatten, &[m]);
        g.push("head", Op::Linear { in_features: 2 * hidden, out_features: 2, bias: true }, &[fl]);
        Ok(PairPredictor {
            space: space.clone(),
            net: Network::build(&g, &InitConfig::with_seed(seed))?,
            hidden,
        })
    }

    fn features(&self, arch: &Architecture, out: &mut Vec<f64>) {
        let (k, n) = (self.space.ops.len(), arch.edges.len());
        for (e, &op) in arch.edges.iter().enumerate() {
            let base = out.len();
            out.resize(base + k + n, 0.0);
            out[base + op as usize] = 1.0;
            out[base + k + e] = 1.0;
        }
    }

    fn batch(&self, items: &[(&Architecture, &Architecture)]) -> Tensor {
        let mut data = Vec::new();
        for (a, b) in items {
            self.features(a, &mut data);
            self.features(b, &mut data);
        }
        let n = self.space.num_edges();
        let f = self.space.ops.len() + n;
        Tensor::new(vec![items.len(), 2, n, f], data).expect("pair batch shape")
    }

    /// SGD on cross-entropy over minibatches drawn uniformly from `pairs`,
    /// or half from `pairs` and half from `extra` when both are non-empty.
    pub fn fit(
        &mut self,
        archs: &[Architecture],
        pairs: &[Pair],
        extra: &[Pair],
        cfg: &PredictorConfig,
        rng: &mut impl Rng,
    ) -> Result<(), EngineError> {
        if pairs.is_empty() && extra.is_empty() {
            return Ok(());
        }
        let hp = SgdConfig {
            lr: cfg.lr,
            momentum: cfg.momentum,
            nesterov: false,
            weight_decay: 0.0,
        };
        for _ in 0..cfg.epochs * cfg.steps {
            let mut chosen = Vec::with_capacity(cfg.batch);
            for i in 0..cfg.batch {
                let from_extra = pairs.is_empty() || (!extra.is_empty() && i % 2 == 1);
                let src = if from_extra { extra } else { pairs };
                chosen.push(src[rng.random_range(0..src.len())]);
            }
            let items: Vec<_> = chosen.iter().map(|p| (&archs[p.first], &archs[p.second])).collect();
            let targets: Vec<usize> = chosen.iter().map(|p| p.first_wins as usize).collect();
            let grads = self.net.backward(&LossSpec::cross_entropy(&targets), &self.batch(&items))?;
            self.net.sgd_step(&grads.params, &hp)?;
        }
        Ok(())
    }

    /// Probability that `a` beats `b`.
    pub fn prob(&mut self, a: &Architecture, b: &Architecture) -> Result<f64, EngineError> {
        let out = self.net.forward(&self.batch(&[(a, b)]))?;
        let d = out.data();
        Ok(1.0 / (1.0 + (d[0] - d[1]).exp()))
    }

    /// Fraction of `pairs` whose winner is predicted correctly.
    pub fn pair_accuracy(&mut self, archs: &[Architecture], pairs: &[Pair]) -> Result<f64, EngineError> {
        let mut hits = 0;
        for chunk in pairs.chunks(256) {
            let items: Vec<_> = chunk.iter().map(|p| (&archs[p.first], &archs[p.second])).collect();
            let out = self.net.forward(&self.batch(&items))?;
            for (p, o) in chunk.iter().zip(out.data().chunks(2)) {
                if (o[1] > o[0]) == p.first_wins {
                    hits += 1;
                }
            }
        }
        Ok(hits as f64 / pairs.len().max(1) as f64)
    }

    fn embeddings(&mut self, archs: &[Architecture]) -> Result<Vec<Vec<f64>>, EngineError> {
        let h = self.hidden;
        let mut out = Vec::with_capacity(archs.len());
        for chunk in archs.chunks(256) {
            let items: Vec<_> = chunk.iter().map(|a| (a, a)).collect();
            self.net.forward(&self.batch(&items))?;
            let emb = self.net.activation("embed").expect("embedding cached");
            out.extend(emb.data().chunks(2 * h).map(|c| c[..h].to_vec()));
        }
        Ok(out)
    }

    /// Expected wins of each architecture against all others in `archs`.
    /// The head is linear in the two embeddings, so each pair logit is a
    /// sum of per-architecture terms.
    pub fn win_scores(&mut self, archs: &[Architecture]) -> Result<Vec<f64>, EngineError> {
        let h = self.hidden;
        let emb = self.embeddings(archs)?;
        let w = self.net.param("head.weight").expect("head weight");
        let b = self.net.param("head.bias").expect("head bias");
        let (w, b) = (w.data(), b.data());
        let dot = |e: &[f64], off: usize| -> f64 {
            (0..h).map(|i| (w[2 * h + off + i] - w[off + i]) * e[i]).sum()
        };
        let left: Vec<f64> = emb.iter().map(|e| dot(e, 0)).collect();
        let right: Vec<f64> = emb.iter().map(|e| dot(e, h)).collect();
        let c = b[1] - b[0];
        let mut wins = vec![0.0; archs.len()];
        for i in 0..archs.len() {
            for j in 0..archs.len() {
                if i != j {
                    wins[i] += 1.0 / (1.0 + (-(left[i] + right[j] + c)).exp());
                }
            }
        }
        if wins.iter().all(|v| v.is_finite()) {
            Ok(wins)
        } else {
            Err(EngineError::NonFinite { node: "head".into() })
        }
    }
}

/// Predictor-guided search. Warmup trains the predictor on all pairs of
/// `N` proxy-ranked random models. Each round ranks a fresh candidate pool
/// by predicted wins, trains the top `k`, adds accuracy-ranked pairs among
/// all trained models and retrains. A diverged predictor is restored and
/// the round falls back to proxy ranking.
pub fn predictor_search(
    bench: &TabularBenchmark,
    proxy: &dyn ProxyOracle,
    cfg: &SearchConfig,
) -> Result<SearchTrace, SearchError> {
    let mut s = Session::new(bench, proxy, cfg)?;
    let pc = cfg.predictor;
    if pc.per_round == 0 || pc.candidates == 0 || pc.batch == 0 {
        return Err(SearchError::InvalidConfig("predictor round sizes must be positive".into()));
    }
    let seed = s.rng.random::<u64>();
    let mut model = PairPredictor::new(s.space, pc.hidden, seed).map_err(crate::proxy::ProxyError::from)?;
    let mut archs: Vec<Architecture> = Vec::new();
    let mut proxy_pairs: Vec<Pair> = Vec::new();
    let mut fitted = false;

    if cfg.warmup > 0 {
        let sample = s.sample_distinct(cfg.warmup, &HashSet::new());
        let ranked = s.rank_by_proxy(sample)?;
        archs.extend(ranked.into_iter().map(|(a, _)| a));
        let order: Vec<usize> = (0..archs.len()).collect();
        proxy_pairs = ranked_pairs(&order, &mut s.rng);
        s.diagnostics.warmup_pairs = proxy_pairs.len();
        fitted = try_fit(&mut model, &archs, &proxy_pairs, &[], &pc, &mut s.rng);
    }

    let mut trained: Vec<(usize, f64)> = Vec::new();
    let mut visited: HashSet<Architecture> = HashSet::new();
    while !s.done() {
        let cands = s.sample_distinct(pc.candidates, &visited);
        if cands.is_empty() {
            break;
        }
        let order: Vec<Architecture> = match fitted.then(|| model.win_scores(&cands)) {
            Some(Ok(wins)) => {
                let mut idx: Vec<usize> = (0..cands.len()).collect();
                let names: Vec<String> = cands.iter().map(|a| s.space.to_string(a)).collect();
                idx.sort_by(|&x, &y| wins[y].total_cmp(&wins[x]).then_with(|| names[x].cmp(&names[y])));
                idx.into_iter().map(|i| cands[i].clone()).collect()
            }
            Some(Err(_)) => {
                s.diagnostics.fallbacks += 1;
                s.rank_by_proxy(cands)?.into_iter().map(|(a, _)| a).collect()
            }
            None if cfg.warmup > 0 => {
                s.diagnostics.fallbacks += 1;
                s.rank_by_proxy(cands)?.into_iter().map(|(a, _)| a).collect()
            }
            None => cands,
        };
        let mut round = Vec::new();
        for arch in order.into_iter().take(pc.per_round) {
            if s.done() {
                break;
            }
            let acc = s.train(&arch)?;
            round.push(s.space.to_string(&arch));
            visited.insert(arch.clone());
            archs.push(arch);
            trained.push((archs.len() - 1, acc));
        }
        s.diagnostics.rounds.push(round);
        if s.done() {
            break;
        }
        let mut by_acc = trained.clone();
        by_acc.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
        let order: Vec<usize> = by_acc.iter().map(|t| t.0).collect();
        let acc_pairs = ranked_pairs(&order, &mut s.rng);
        fitted = try_fit(&mut model, &archs, &proxy_pairs, &acc_pairs, &pc, &mut s.rng);
    }
    Ok(s.finish())
}

/// Fits in place; on divergence restores the previous weights and reports
/// failure.
fn try_fit(
    model: &mut PairPredictor,
    archs: &[Architecture],
    pairs: &[Pair],
    extra: &[Pair],
    cfg: &PredictorConfig,
    rng: &mut impl Rng,
) -> bool {
    let saved = model.clone();
    match model.fit(archs, pairs, extra, cfg, rng) {
        Ok(()) => true,
        Err(_) => {
            *model = saved;
            false
        }
    }
}
