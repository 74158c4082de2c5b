use std::cmp::Ordering;
use std::collections::BTreeMap;

use super::{Metric, ProxyError};

/// Metrics consulted by the majority vote.
pub const VOTE_METRICS: [Metric; 3] = [Metric::Synflow, Metric::JacobCov, Metric::Snip];

fn check(scores: &BTreeMap<Metric, f64>) -> Result<(), ProxyError> {
    if scores.len() != VOTE_METRICS.len() || !VOTE_METRICS.iter().all(|m| scores.contains_key(m)) {
        return Err(ProxyError::MetricMismatch(format!(
            "vote needs exactly {VOTE_METRICS:?}, got {:?}",
            scores.keys().collect::<Vec<_>>()
        )));
    }
    Ok(())
}

/// Half-points won by `a` over the three metrics (ties split).
fn points(a: &BTreeMap<Metric, f64>, b: &BTreeMap<Metric, f64>) -> u32 {
    VOTE_METRICS
        .iter()
        .map(|m| match a[m].partial_cmp(&b[m]) {
            Some(Ordering::Greater) => 2,
            Some(Ordering::Equal) => 1,
            _ => 0,
        })
        .sum()
}

/// `Greater` when `a` wins the majority of the three metric comparisons.
pub fn vote_compare(a: &BTreeMap<Metric, f64>, b: &BTreeMap<Metric, f64>) -> Result<Ordering, ProxyError> {
    check(a)?;
    check(b)?;
    Ok(points(a, b).cmp(&3))
}

/// Indices of `models` best first, ordered by pairwise vote wins (ties worth
/// half), then synflow, then name.
pub fn vote_rank(models: &[(String, BTreeMap<Metric, f64>)]) -> Result<Vec<usize>, ProxyError> {
    for (_, s) in models {
        check(s)?;
    }
    let n = models.len();
    // Copeland score in half-wins so it stays integral.
    let mut copeland = vec![0u64; n];
    for i in 0..n {
        for j in i + 1..n {
            match points(&models[i].1, &models[j].1).cmp(&3) {
                Ordering::Greater => copeland[i] += 2,
                Ordering::Less => copeland[j] += 2,
                Ordering::Equal => {
                    copeland[i] += 1;
                    copeland[j] += 1;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        copeland[b]
            .cmp(&copeland[a])
            .then_with(|| models[b].1[&Metric::Synflow].total_cmp(&models[a].1[&Metric::Synflow]))
            .then_with(|| models[a].0.cmp(&models[b].0))
    });
    Ok(order)
}
