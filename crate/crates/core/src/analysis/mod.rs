//! Rank statistics over (architecture, proxy, accuracy) tables.

mod sweep;
mod table;

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{Architecture, SpaceSpec};

pub use sweep::{sensitivity_sweep, SweepAxes, SweepCell, SweepRow};
pub use table::Table;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("need at least 2 points, got {0}")]
    TooFew(usize),
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty table")]
    Empty,
    #[error("requested top {n} of only {size} rows")]
    TooLarge { n: usize, size: usize },
    #[error("fraction {0} outside (0, 1]")]
    BadFraction(f64),
}

/// 1-based ranks with ties sharing the mean of their positions.
pub fn mid_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && xs[idx[j]] == xs[idx[i]] {
            j += 1;
        }
        // positions i+1 ..= j share their mean
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// `Σ dx·dy / √(Σ dx² · Σ dy²)` with deviations from the means, clamped to
/// `[−1, 1]`.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, AnalysisError> {
    check_pair(xs, ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalysisError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<(), AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(AnalysisError::TooFew(xs.len()));
    }
    if let Some(i) = xs.iter().chain(ys).position(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite(i % xs.len()));
    }
    Ok(())
}

/// Spearman ρ: Pearson correlation of mid-ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, AnalysisError> {
    check_pair(xs, ys)?;
    pearson(&mid_ranks(xs), &mid_ranks(ys))
}

/// Indices of the `k` largest values; ties go to the smaller name.
pub fn top_k(values: &[f64], names: &[String], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then_with(|| names[a].cmp(&names[b])));
    idx.truncate(k);
    idx
}

/// `⌈fraction · n⌉`, at least 1.
pub fn fraction_count(fraction: f64, n: usize) -> Result<usize, AnalysisError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(AnalysisError::BadFraction(fraction));
    }
    Ok(((fraction * n as f64).ceil() as usize).clamp(1, n.max(1)))
}

/// Parallel columns of architecture, proxy value (absent when the metric
/// failed) and accuracy.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedTable {
    pub archs: Vec<String>,
    pub proxy: Vec<Option<f64>>,
    pub accuracy: Vec<f64>,
}

impl RankedTable {
    pub fn new(archs: Vec<String>, proxy: Vec<Option<f64>>, accuracy: Vec<f64>) -> Result<Self, AnalysisError> {
        if archs.len() != proxy.len() || archs.len() != accuracy.len() {
            return Err(AnalysisError::LengthMismatch(archs.len(), proxy.len().min(accuracy.len())));
        }
        if let Some(i) = accuracy.iter().position(|a| !a.is_finite()) {
            return Err(AnalysisError::NonFinite(i));
        }
        Ok(RankedTable { archs, proxy, accuracy })
    }

    pub fn len(&self) -> usize {
        self.archs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.archs.is_empty()
    }

    /// Rows with a proxy value.
    pub fn present(&self) -> (Vec<String>, Vec<f64>, Vec<f64>) {
        let mut out = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..self.len() {
            if let Some(p) = self.proxy[i] {
                out.0.push(self.archs[i].clone());
                out.1.push(p);
                out.2.push(self.accuracy[i]);
            }
        }
        out
    }

    /// Rows whose proxy is absent.
    pub fn excluded(&self) -> usize {
        self.proxy.iter().filter(|p| p.is_none()).count()
    }

    pub fn spearman(&self) -> Result<f64, AnalysisError> {
        let (_, p, a) = self.present();
        spearman(&p, &a)
    }

    /// Restriction to the most accurate `fraction` of rows.
    pub fn top_by_accuracy(&self, fraction: f64) -> Result<RankedTable, AnalysisError> {
        if self.is_empty() {
            return Err(AnalysisError::Empty);
        }
        let k = fraction_count(fraction, self.len())?;
        let mut idx = top_k(&self.accuracy, &self.archs, k);
        idx.sort_unstable();
        Ok(RankedTable {
            archs: idx.iter().map(|&i| self.archs[i].clone()).collect(),
            proxy: idx.iter().map(|&i| self.proxy[i]).collect(),
            accuracy: idx.iter().map(|&i| self.accuracy[i]).collect(),
        })
    }
}

/// Spearman ρ within the top `fraction` of rows by accuracy.
pub fn top_fraction_spearman(table: &RankedTable, fraction: f64) -> Result<f64, AnalysisError> {
    table.top_by_accuracy(fraction)?.spearman()
}

/// Percentage of the top-`fraction` rows by accuracy that are also in the
/// top-`fraction` by proxy. Rows without a proxy value are dropped first.
pub fn top_overlap(table: &RankedTable, fraction: f64) -> Result<f64, AnalysisError> {
    let (names, p, a) = table.present();
    if names.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let k = fraction_count(fraction, names.len())?;
    let by_acc = top_k(&a, &names, k);
    let by_proxy = top_k(&p, &names, k);
    let hits = by_acc.iter().filter(|i| by_proxy.contains(i)).count();
    Ok(100.0 * hits as f64 / k as f64)
}

/// How many of the proxy's top `n` rows are among the top
/// `accuracy_fraction` rows by accuracy.
pub fn top_n_count(table: &RankedTable, n: usize, accuracy_fraction: f64) -> Result<usize, AnalysisError> {
    let (names, p, a) = table.present();
    if n > names.len() {
        return Err(AnalysisError::TooLarge { n, size: names.len() });
    }
    let k = fraction_count(accuracy_fraction, names.len())?;
    let mut good = vec![false; names.len()];
    for i in top_k(&a, &names, k) {
        good[i] = true;
    }
    Ok(top_k(&p, &names, n).into_iter().filter(|&i| good[i]).count())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    /// Percentage of clusters where the proxy's pick has the cluster's best
    /// accuracy.
    pub top_match: f64,
    pub avg_cluster_size: f64,
    /// Mean within-cluster Spearman ρ over clusters where it is defined.
    pub local_rho: Option<f64>,
    pub clusters: usize,
    /// Clusters whose local ρ was undefined.
    pub rho_undefined: usize,
}

/// Edit-distance-1 neighborhood study. `accuracy` and `proxy` are indexed
/// by [`SpaceSpec::index_of`]; each cluster is a random center plus all its
/// neighbors. Members without a proxy value are dropped from their cluster.
pub fn cluster_analysis(
    space: &SpaceSpec,
    accuracy: &[f64],
    proxy: &[Option<f64>],
    n_clusters: usize,
    rng: &mut impl Rng,
) -> Result<ClusterReport, AnalysisError> {
    let centers: Vec<Architecture> = (0..n_clusters).map(|_| space.random(rng)).collect();
    cluster_analysis_at(space, accuracy, proxy, &centers)
}

/// [`cluster_analysis`] around the given centers.
pub fn cluster_analysis_at(
    space: &SpaceSpec,
    accuracy: &[f64],
    proxy: &[Option<f64>],
    centers: &[Architecture],
) -> Result<ClusterReport, AnalysisError> {
    if centers.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let (mut matches, mut sizes, mut rho_sum, mut rho_n) = (0usize, 0usize, 0.0, 0usize);
    let mut usable = 0usize;
    for c in centers {
        let mut members: Vec<Architecture> = vec![c.clone()];
        members.extend(space.neighbors(c));
        sizes += members.len();
        let mut rows: Vec<(String, f64, f64)> = Vec::with_capacity(members.len());
        for m in &members {
            let i = space.index_of(m) as usize;
            if let Some(p) = proxy[i] {
                rows.push((space.to_string(m), p, accuracy[i]));
            }
        }
        if rows.is_empty() {
            continue;
        }
        usable += 1;
        let names: Vec<String> = rows.iter().map(|r| r.0.clone()).collect();
        let p: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let a: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let pick = top_k(&p, &names, 1)[0];
        let best = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if a[pick] == best {
            matches += 1;
        }
        match spearman(&p, &a) {
            Ok(r) => {
                rho_sum += r;
                rho_n += 1;
            }
            Err(_) => {}
        }
    }
    Ok(ClusterReport {
        top_match: if usable == 0 { 0.0 } else { 100.0 * matches as f64 / usable as f64 },
        avg_cluster_size: sizes as f64 / centers.len() as f64,
        local_rho: (rho_n > 0).then(|| rho_sum / rho_n as f64),
        clusters: centers.len(),
        rho_undefined: usable - rho_n,
    })
}

/// Spearman ρ between validation accuracy at each epoch and a final
/// accuracy, one value per epoch (`None` where undefined).
pub fn epoch_correlations(curves: &[Vec<f64>], finals: &[f64]) -> Vec<Option<f64>> {
    let epochs = curves.iter().map(Vec::len).min().unwrap_or(0);
    (0..epochs)
        .map(|e| {
            let at: Vec<f64> = curves.iter().map(|c| c[e]).collect();
            spearman(&at, finals).ok()
        })
        .collect()
}

/// Median and quartiles by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `(q25, median, q75)` of an unsorted sample.
pub fn quartiles(values: &[f64]) -> (f64, f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75))
}
