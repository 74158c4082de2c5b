use std::collections::HashSet;

use super::{ProxyOracle, SearchConfig, SearchError, SearchTrace, Session};
use crate::bench::TabularBenchmark;

/// Random search. With warmup, `N` distinct random architectures are ranked
/// by proxy and trained best first; once they run out (or with `N = 0`)
/// unvisited architectures are drawn uniformly. Stops after `T` models or
/// when the space is exhausted.
pub fn random_search(
    bench: &TabularBenchmark,
    proxy: &dyn ProxyOracle,
    cfg: &SearchConfig,
) -> Result<SearchTrace, SearchError> {
    let mut s = Session::new(bench, proxy, cfg)?;
    let mut visited = HashSet::new();
    if cfg.warmup > 0 {
        let sample = s.sample_distinct(cfg.warmup, &visited);
        for (arch, _) in s.rank_by_proxy(sample)? {
            if s.done() {
                break;
            }
            s.train(&arch)?;
            visited.insert(arch);
        }
    }
    while !s.done() {
        let Some(arch) = s.sample_distinct(1, &visited).pop() else {
            break;
        };
        s.train(&arch)?;
        visited.insert(arch);
    }
    Ok(s.finish())
}
