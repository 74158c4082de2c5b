//! Search algorithms over a tabular benchmark, each with optional proxy
//! warmup (`N`) and proxy move proposal (`R`).

mod evolution;
mod experiment;
mod oracle;
mod predictor;
mod random;
mod reinforce;

use std::collections::HashSet;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::bench::{BenchError, TabularBenchmark};
use crate::io;
use crate::proxy::{Metric, ProxyError};
use crate::space::{Architecture, SpaceError, SpaceSpec};

pub use evolution::aging_evolution;
pub use experiment::{run_experiment, samples_to_threshold, summarize, StepSummary};
pub use oracle::{LiveProxy, ProxyOracle, TableProxy};
pub use predictor::{pair_count, predictor_search, ranked_pairs, Pair, PairPredictor, PredictorConfig};
pub use random::random_search;
pub use reinforce::{reinforce_search, Controller, RlConfig};

pub const TRACE_FORMAT: &str = "zcnas-trace";

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Proxy(#[from] ProxyError),
    #[error("malformed trace: {0}")]
    Format(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Rand,
    Rl,
    Ae,
    Predictor,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Rand, Algorithm::Rl, Algorithm::Ae, Algorithm::Predictor];

    pub fn id(self) -> &'static str {
        match self {
            Algorithm::Rand => "rand",
            Algorithm::Rl => "rl",
            Algorithm::Ae => "ae",
            Algorithm::Predictor => "predictor",
        }
    }
}

impl FromStr for Algorithm {
    type Err = SearchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.id() == s)
            .ok_or_else(|| SearchError::InvalidConfig(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeConfig {
    pub pool: usize,
    pub sample: usize,
}

impl Default for AeConfig {
    fn default() -> Self {
        AeConfig { pool: 64, sample: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub algorithm: Algorithm,
    /// Trained-model budget `T`.
    pub budget: usize,
    /// Proxy-scored warmup models `N`; 0 disables warmup.
    pub warmup: usize,
    /// Proxy evaluations per move `R`; 0 disables move proposal.
    pub move_ratio: usize,
    pub metric: Metric,
    pub ae: AeConfig,
    pub rl: RlConfig,
    pub predictor: PredictorConfig,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            algorithm: Algorithm::Rand,
            budget: 100,
            warmup: 0,
            move_ratio: 0,
            metric: Metric::Synflow,
            ae: AeConfig::default(),
            rl: RlConfig::default(),
            predictor: PredictorConfig::default(),
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.budget == 0 {
            return Err(SearchError::InvalidConfig("budget must be at least 1".into()));
        }
        if self.algorithm == Algorithm::Ae {
            if self.ae.pool == 0 || self.ae.sample == 0 {
                return Err(SearchError::InvalidConfig("pool and sample sizes must be positive".into()));
            }
            if self.warmup > 0 && self.ae.pool > self.warmup {
                return Err(SearchError::InvalidConfig(format!(
                    "pool {} exceeds warmup {}",
                    self.ae.pool, self.warmup
                )));
            }
        }
        if self.algorithm == Algorithm::Predictor && self.warmup == 1 {
            return Err(SearchError::InvalidConfig("predictor warmup needs at least 2 models".into()));
        }
        Ok(())
    }
}

/// One trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub index: usize,
    pub arch: String,
    pub acc: f64,
    pub best: f64,
}

/// Extra state recorded by some algorithms.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Normalized proxy rewards of the controller warmup.
    pub warmup_rewards: Vec<f64>,
    /// Controller entropy before the first and after every warmup update.
    pub warmup_entropy: Vec<f64>,
    /// Controller probabilities per edge after warmup.
    pub warmup_probs: Vec<Vec<f64>>,
    /// Architectures trained in each predictor round.
    pub rounds: Vec<Vec<String>>,
    /// Proxy-ranked training pairs produced by the predictor warmup.
    pub warmup_pairs: usize,
    /// Rounds where the predictor diverged and the proxy ranking was used.
    pub fallbacks: usize,
    /// Pool contents after the search, oldest first.
    pub pool: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub events: Vec<Event>,
    pub proxy_evals: usize,
    pub wall_clock_secs: f64,
    pub diagnostics: Diagnostics,
}

impl SearchTrace {
    pub fn best(&self) -> Option<f64> {
        self.events.last().map(|e| e.best)
    }

    /// Best-so-far after `t` trained models (the last value if the trace is
    /// shorter).
    pub fn best_at(&self, t: usize) -> Option<f64> {
        if t == 0 {
            return None;
        }
        self.events.get(t.min(self.events.len()) - 1).map(|e| e.best)
    }

    /// Trace file: header plus one `{index, arch, acc, best}` line per event.
    pub fn render(&self, meta: Value) -> String {
        io::render_jsonl(
            &io::header(TRACE_FORMAT, json!({ "meta": meta, "proxy_evals": self.proxy_evals })),
            self.events.iter().map(|e| serde_json::to_value(e).expect("event serializes")),
        )
    }

    pub fn parse(text: &str) -> Result<SearchTrace, SearchError> {
        let (header, lines) = io::parse_jsonl(text, TRACE_FORMAT).map_err(SearchError::Format)?;
        let events = lines
            .into_iter()
            .map(|l| serde_json::from_value(l).map_err(|e| SearchError::Format(e.to_string())))
            .collect::<Result<_, _>>()?;
        Ok(SearchTrace {
            events,
            proxy_evals: header.get("proxy_evals").and_then(Value::as_u64).unwrap_or(0) as usize,
            wall_clock_secs: 0.0,
            diagnostics: Diagnostics::default(),
        })
    }
}

/// Runs `cfg.algorithm`; `proxy` is consulted only for warmup and move
/// proposal.
pub fn run_search(
    bench: &TabularBenchmark,
    proxy: &dyn ProxyOracle,
    cfg: &SearchConfig,
) -> Result<SearchTrace, SearchError> {
    match cfg.algorithm {
        Algorithm::Rand => random_search(bench, proxy, cfg),
        Algorithm::Ae => aging_evolution(bench, proxy, cfg),
        Algorithm::Rl => reinforce_search(bench, proxy, cfg),
        Algorithm::Predictor => predictor_search(bench, proxy, cfg),
    }
}

/// Shared bookkeeping: budget, best-so-far, proxy counting and the rng.
pub(crate) struct Session<'a> {
    pub bench: &'a TabularBenchmark,
    pub proxy: &'a dyn ProxyOracle,
    pub space: &'a SpaceSpec,
    pub rng: ChaCha8Rng,
    pub budget: usize,
    events: Vec<Event>,
    proxy_evals: usize,
    start: Instant,
    pub diagnostics: Diagnostics,
}

impl<'a> Session<'a> {
    pub fn new(bench: &'a TabularBenchmark, proxy: &'a dyn ProxyOracle, cfg: &SearchConfig) -> Result<Self, SearchError> {
        cfg.validate()?;
        Ok(Session {
            bench,
            proxy,
            space: &bench.space,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            budget: cfg.budget,
            events: Vec::new(),
            proxy_evals: 0,
            start: Instant::now(),
            diagnostics: Diagnostics::default(),
        })
    }

    pub fn done(&self) -> bool {
        self.events.len() >= self.budget
    }

    /// Queries the benchmark for one seed of `arch`; counts against the
    /// budget.
    pub fn train(&mut self, arch: &Architecture) -> Result<f64, SearchError> {
        assert!(!self.done(), "training past the budget");
        let name = self.space.to_string(arch);
        let acc = self.bench.query_str(&name, &mut self.rng)?;
        let best = self.events.last().map_or(acc, |e| e.best.max(acc));
        self.events.push(Event {
            index: self.events.len() + 1,
            arch: name,
            acc,
            best,
        });
        Ok(acc)
    }

    /// Proxy score, `None` for a failed metric.
    pub fn score_opt(&mut self, arch: &Architecture) -> Result<Option<f64>, SearchError> {
        self.proxy_evals += 1;
        Ok(self.proxy.score(arch)?)
    }

    /// Proxy score; failed metrics rank below every finite score.
    pub fn score(&mut self, arch: &Architecture) -> Result<f64, SearchError> {
        Ok(self.score_opt(arch)?.unwrap_or(f64::NEG_INFINITY))
    }

    /// `n` distinct uniformly random architectures (fewer if the space is
    /// smaller), excluding `skip`.
    pub fn sample_distinct(&mut self, n: usize, skip: &HashSet<Architecture>) -> Vec<Architecture> {
        let size = self.space.size();
        let available = size.saturating_sub(skip.len() as u128);
        let n = (n as u128).min(available) as usize;
        let mut seen: HashSet<Architecture> = HashSet::with_capacity(n);
        let mut out = Vec::with_capacity(n);
        if (n as u128) * 2 > available && size <= 1 << 20 {
            // Dense case: shuffle the complement.
            let mut all: Vec<Architecture> = (0..size as u64)
                .map(|i| self.space.from_index(i))
                .filter(|a| !skip.contains(a))
                .collect();
            for i in 0..n {
                let j = self.rng.random_range(i..all.len());
                all.swap(i, j);
            }
            all.truncate(n);
            return all;
        }
        while out.len() < n {
            let a = self.space.random(&mut self.rng);
            if !skip.contains(&a) && seen.insert(a.clone()) {
                out.push(a);
            }
        }
        out
    }

    /// Scores `archs` and returns them best first; ties by canonical string.
    pub fn rank_by_proxy(&mut self, archs: Vec<Architecture>) -> Result<Vec<(Architecture, f64)>, SearchError> {
        let mut scored = Vec::with_capacity(archs.len());
        for a in archs {
            let s = self.score(&a)?;
            scored.push((self.space.to_string(&a), a, s));
        }
        scored.sort_by(|x, y| y.2.total_cmp(&x.2).then_with(|| x.0.cmp(&y.0)));
        Ok(scored.into_iter().map(|(_, a, s)| (a, s)).collect())
    }

    pub fn finish(self) -> SearchTrace {
        SearchTrace {
            events: self.events,
            proxy_evals: self.proxy_evals,
            wall_clock_secs: self.start.elapsed().as_secs_f64(),
            diagnostics: self.diagnostics,
        }
    }
}
