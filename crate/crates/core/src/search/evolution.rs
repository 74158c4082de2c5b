use std::collections::{HashSet, VecDeque};

use rand::seq::index;
use rand::Rng;

use super::{ProxyOracle, SearchConfig, SearchError, SearchTrace, Session};
use crate::bench::TabularBenchmark;
use crate::space::{Architecture, SpaceError};

/// Aging evolution: sample `S` members of a FIFO pool of size `P`, mutate
/// the most accurate, train the child and evict the oldest member.
///
/// Warmup fills the pool with the proxy top-`P` of `N` random architectures,
/// trained best first so the proxy's favourite is the oldest. Move proposal
/// replaces the random mutation with the proxy argmax over up to `R`
/// distance-1 neighbors that have not been trained yet.
pub fn aging_evolution(
    bench: &TabularBenchmark,
    proxy: &dyn ProxyOracle,
    cfg: &SearchConfig,
) -> Result<SearchTrace, SearchError> {
    let mut s = Session::new(bench, proxy, cfg)?;
    if s.space.ops.len() < 2 {
        return Err(SpaceError::NoNeighbors.into());
    }
    let p = cfg.ae.pool;
    let mut pool: VecDeque<(Architecture, f64)> = VecDeque::with_capacity(p + 1);
    let mut trained: HashSet<Architecture> = HashSet::new();

    let initial: Vec<Architecture> = if cfg.warmup > 0 {
        let sample = s.sample_distinct(cfg.warmup, &HashSet::new());
        s.rank_by_proxy(sample)?.into_iter().take(p).map(|(a, _)| a).collect()
    } else {
        s.sample_distinct(p, &HashSet::new())
    };
    for arch in initial {
        if s.done() {
            break;
        }
        let acc = s.train(&arch)?;
        trained.insert(arch.clone());
        pool.push_back((arch, acc));
    }

    while !s.done() {
        let k = cfg.ae.sample.min(pool.len());
        let picks = index::sample(&mut s.rng, pool.len(), k);
        let parent = picks
            .iter()
            .map(|i| &pool[i])
            .fold(None::<&(Architecture, f64)>, |best, cand| match best {
                Some(b) if b.1 >= cand.1 => Some(b),
                _ => Some(cand),
            })
            .expect("pool is non-empty")
            .0
            .clone();
        let child = if cfg.move_ratio > 0 {
            propose(&mut s, &parent, cfg.move_ratio, &trained)?
        } else {
            s.space.mutate(&parent, &mut s.rng)?
        };
        let acc = s.train(&child)?;
        trained.insert(child.clone());
        pool.push_back((child, acc));
        if pool.len() > p {
            pool.pop_front();
        }
    }
    s.diagnostics.pool = pool.iter().map(|(a, _)| s.space.to_string(a)).collect();
    Ok(s.finish())
}

/// Proxy argmax over up to `r` random untrained neighbors of `parent` (all
/// neighbors if every one has been trained).
fn propose(
    s: &mut Session<'_>,
    parent: &Architecture,
    r: usize,
    trained: &HashSet<Architecture>,
) -> Result<Architecture, SearchError> {
    let all = s.space.neighbors(parent);
    let fresh: Vec<Architecture> = all.iter().filter(|a| !trained.contains(*a)).cloned().collect();
    let mut cands = if fresh.is_empty() { all } else { fresh };
    if cands.len() > r {
        for i in 0..r {
            let j = s.rng.random_range(i..cands.len());
            cands.swap(i, j);
        }
        cands.truncate(r);
    }
    let ranked = s.rank_by_proxy(cands)?;
    Ok(ranked.into_iter().next().expect("a parent has neighbors").0)
}
