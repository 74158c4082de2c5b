use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_search, ProxyOracle, SearchConfig, SearchError, SearchTrace};
use crate::analysis::quartiles;
use crate::bench::TabularBenchmark;

/// Best-so-far statistics across repeats after `step` trained models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub step: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

/// `repeats` independent searches with seeds `cfg.seed + r`, run on up to
/// `workers` threads. Traces are returned in seed order.
pub fn run_experiment(
    bench: &TabularBenchmark,
    proxy: &dyn ProxyOracle,
    cfg: &SearchConfig,
    repeats: usize,
    workers: usize,
) -> Result<Vec<SearchTrace>, SearchError> {
    let one = |r: usize| {
        let mut c = cfg.clone();
        c.seed = cfg.seed.wrapping_add(r as u64);
        run_search(bench, proxy, &c)
    };
    if workers <= 1 {
        return (0..repeats).map(one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SearchError::InvalidConfig(e.to_string()))?;
    pool.install(|| (0..repeats).into_par_iter().map(one).collect())
}

/// Per-step median and quartiles of best-so-far for steps `1..=budget`. A
/// trace that stopped early holds its last value.
pub fn summarize(traces: &[SearchTrace], budget: usize) -> Vec<StepSummary> {
    (1..=budget)
        .filter_map(|t| {
            let vals: Vec<f64> = traces.iter().filter_map(|tr| tr.best_at(t)).collect();
            if vals.is_empty() {
                return None;
            }
            let (q25, median, q75) = quartiles(&vals);
            Some(StepSummary { step: t, median, q25, q75 })
        })
        .collect()
}

/// Trained models needed to first reach `threshold`.
pub fn samples_to_threshold(trace: &SearchTrace, threshold: f64) -> Option<usize> {
    trace.events.iter().find(|e| e.acc >= threshold).map(|e| e.index)
}
