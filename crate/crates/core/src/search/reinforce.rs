use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ProxyOracle, SearchConfig, SearchError, SearchTrace, Session};
use crate::bench::TabularBenchmark;
use crate::space::Architecture;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RlConfig {
    pub lr: f64,
    /// Weight of the old value in the moving-average baselines.
    pub baseline_decay: f64,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            lr: 0.1,
            baseline_decay: 0.9,
        }
    }
}

/// Independent categorical distribution over ops on each edge.
#[derive(Clone, Debug, PartialEq)]
pub struct Controller {
    pub logits: Vec<Vec<f64>>,
}

impl Controller {
    pub fn uniform(edges: usize, ops: usize) -> Self {
        Controller {
            logits: vec![vec![0.0; ops]; edges],
        }
    }

    pub fn probs(&self) -> Vec<Vec<f64>> {
        self.logits.iter().map(|l| softmax(l)).collect()
    }

    /// Sum of per-edge entropies in nats.
    pub fn entropy(&self) -> f64 {
        self.probs()
            .iter()
            .flatten()
            .filter(|&&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Architecture {
        let edges = self
            .probs()
            .iter()
            .map(|p| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, q) in p.iter().enumerate() {
                    acc += q;
                    if u < acc {
                        return i as u8;
                    }
                }
                (p.len() - 1) as u8
            })
            .collect();
        Architecture::new(edges)
    }

    /// Gradient ascent on `advantage · log p(arch)`.
    pub fn update(&mut self, arch: &Architecture, advantage: f64, lr: f64) {
        for (e, logits) in self.logits.iter_mut().enumerate() {
            let p = softmax(logits);
            for (o, l) in logits.iter_mut().enumerate() {
                let indicator = if arch.edges[e] as usize == o { 1.0 } else { 0.0 };
                *l += lr * advantage * (indicator - p[o]);
            }
        }
    }
}

fn softmax(l: &[f64]) -> Vec<f64> {
    let m = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = l.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Proxy scores mapped linearly onto `[−1, 1]` by the running min and max.
#[derive(Default)]
struct OnlineScale {
    lo: f64,
    hi: f64,
    seen: bool,
}

impl OnlineScale {
    fn reward(&mut self, x: Option<f64>) -> f64 {
        let Some(x) = x.filter(|v| v.is_finite()) else {
            return -1.0;
        };
        if !self.seen {
            (self.lo, self.hi, self.seen) = (x, x, true);
        }
        self.lo = self.lo.min(x);
        self.hi = self.hi.max(x);
        if self.hi == self.lo {
            0.0
        } else {
            (2.0 * (x - self.lo) / (self.hi - self.lo) - 1.0).clamp(-1.0, 1.0)
        }
    }
}

/// Exponential moving average; the first value initializes it.
struct Baseline {
    value: Option<f64>,
    decay: f64,
}

impl Baseline {
    /// Advantage of `r`, then folds `r` into the average.
    fn advantage(&mut self, r: f64) -> f64 {
        let b = *self.value.get_or_insert(r);
        self.value = Some(self.decay * b + (1.0 - self.decay) * r);
        r - b
    }
}

/// REINFORCE with an edge-factorized controller. Warmup performs `N` proxy
/// reward updates before any training; move proposal interleaves `R` proxy
/// reward updates before every accuracy reward update. Proxy and accuracy
/// rewards keep separate baselines.
pub fn reinforce_search(
    bench: &TabularBenchmark,
    proxy: &dyn ProxyOracle,
    cfg: &SearchConfig,
) -> Result<SearchTrace, SearchError> {
    let mut s = Session::new(bench, proxy, cfg)?;
    let mut ctl = Controller::uniform(s.space.num_edges(), s.space.ops.len());
    let mut scale = OnlineScale::default();
    let mut proxy_base = Baseline {
        value: None,
        decay: cfg.rl.baseline_decay,
    };
    let mut acc_base = Baseline {
        value: None,
        decay: cfg.rl.baseline_decay,
    };
    let lr = cfg.rl.lr;

    let mut proxy_step = |s: &mut Session<'_>, ctl: &mut Controller, warm: bool| -> Result<(), SearchError> {
        let arch = ctl.sample(&mut s.rng);
        let r = scale.reward(s.score_opt(&arch)?);
        ctl.update(&arch, proxy_base.advantage(r), lr);
        if warm {
            s.diagnostics.warmup_rewards.push(r);
            s.diagnostics.warmup_entropy.push(ctl.entropy());
        }
        Ok(())
    };

    if cfg.warmup > 0 {
        s.diagnostics.warmup_entropy.push(ctl.entropy());
        for _ in 0..cfg.warmup {
            proxy_step(&mut s, &mut ctl, true)?;
        }
        s.diagnostics.warmup_probs = ctl.probs();
    }
    while !s.done() {
        for _ in 0..cfg.move_ratio {
            proxy_step(&mut s, &mut ctl, false)?;
        }
        let arch = ctl.sample(&mut s.rng);
        let acc = s.train(&arch)?;
        ctl.update(&arch, acc_base.advantage(acc), lr);
    }
    Ok(s.finish())
}
