use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::tabular::TabularBenchmark;
use super::train::{TrainRecord, TrainStatus};
use super::BenchError;
use crate::analysis::{mid_ranks, spearman};
use crate::io;
use crate::proxy::{Metric, ScoreCache, ScoreEntry};
use crate::space::SpaceSpec;

/// Accuracy model of a synthetic tabular benchmark: a base level plus
/// per-op linear terms in the op counts, per-(edge, op) effects, pairwise
/// edge interactions and Gaussian noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub base: f64,
    /// Standard deviation of each op's per-occurrence weight.
    pub op_weight: f64,
    pub edge_effect: f64,
    pub interaction: f64,
    /// Per-architecture noise, shared by its seeds.
    pub arch_noise: f64,
    /// Per-(architecture, seed) noise.
    pub seed_noise: f64,
    pub seeds: usize,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            base: 0.7,
            op_weight: 0.015,
            edge_effect: 0.01,
            interaction: 0.005,
            arch_noise: 0.01,
            seed_noise: 0.0,
            seeds: 1,
        }
    }
}

/// A generated benchmark with its calibrated proxy.
#[derive(Clone, Debug)]
pub struct SyntheticTabular {
    pub bench: TabularBenchmark,
    /// Proxy value per canonical architecture string.
    pub proxy: BTreeMap<String, f64>,
    pub target_rho: f64,
    pub measured_rho: f64,
    /// Signed weight of the accuracy ranks in the blend.
    pub alpha: f64,
}

/// Calibration tolerance on the measured Spearman ρ.
pub const CALIBRATION_TOLERANCE: f64 = 0.005;
const MAX_BISECTIONS: usize = 60;

impl SyntheticTabular {
    /// Proxy values as score-file entries under `metric`.
    pub fn proxy_entries(&self, metric: Metric, seed: u64) -> Vec<ScoreEntry> {
        self.proxy
            .iter()
            .map(|(arch, &v)| {
                let key = json!({ "synthetic": seed, "rho": self.target_rho, "arch": arch, "metric": metric });
                ScoreEntry {
                    arch: arch.clone(),
                    metric,
                    value: Some(v),
                    fingerprint: io::sha256_hex(key.to_string().as_bytes())[..32].to_string(),
                    error: None,
                }
            })
            .collect()
    }

    pub fn save_proxy(&self, path: &Path, metric: Metric, seed: u64) -> Result<(), BenchError> {
        io::atomic_write(path, ScoreCache::render(&self.proxy_entries(metric, seed)).as_bytes())?;
        Ok(())
    }
}

/// Generates accuracies for every architecture of `space` and a proxy whose
/// Spearman ρ against mean accuracy matches `target_rho` to within
/// [`CALIBRATION_TOLERANCE`]. The proxy is `α·u_acc + (1−|α|)·u_noise`
/// with `α ∈ [−1, 1]`, where the `u` are normalized ranks of accuracy and of
/// an independent random series; `α` is found by bisection.
pub fn gen_synthetic_tabular(
    space: &SpaceSpec,
    target_rho: f64,
    model: &NoiseModel,
    seed: u64,
) -> Result<SyntheticTabular, BenchError> {
    if !(target_rho.abs() <= 1.0) {
        return Err(BenchError::InvalidConfig(format!("target rho {target_rho} outside [-1, 1]")));
    }
    if model.seeds == 0 {
        return Err(BenchError::InvalidConfig("at least one seed per architecture".into()));
    }
    let archs: Vec<_> = space.enumerate(u128::MAX)?.collect();
    let names: Vec<String> = archs.iter().map(|a| space.to_string(a)).collect();
    let (k, e) = (space.ops.len(), space.num_edges());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |sd: f64| Normal::new(0.0, sd.max(0.0)).expect("finite standard deviation");
    let op_w: Vec<f64> = (0..k).map(|_| normal(model.op_weight).sample(&mut rng)).collect();
    let edge_fx: Vec<Vec<f64>> = (0..e)
        .map(|_| (0..k).map(|_| normal(model.edge_effect).sample(&mut rng)).collect())
        .collect();
    let pair_fx: Vec<f64> = (0..e * e * k * k).map(|_| normal(model.interaction).sample(&mut rng)).collect();

    let mut bench = TabularBenchmark::new(space.clone());
    bench.meta = json!({ "synthetic": { "seed": seed, "target_rho": target_rho, "model": model } });
    let mut mean_acc = Vec::with_capacity(archs.len());
    for (arch, name) in archs.iter().zip(&names) {
        let o = &arch.edges;
        let mut a = model.base + normal(model.arch_noise).sample(&mut rng);
        for i in 0..e {
            a += op_w[o[i] as usize] + edge_fx[i][o[i] as usize];
            for j in i + 1..e {
                a += pair_fx[((i * e + j) * k + o[i] as usize) * k + o[j] as usize];
            }
        }
        let mut sum = 0.0;
        for s in 0..model.seeds {
            let acc = (a + normal(model.seed_noise).sample(&mut rng)).clamp(0.0, 1.0);
            sum += acc;
            bench.insert(
                name,
                TrainRecord {
                    seed: s as u64,
                    val_acc: vec![acc],
                    test_acc: acc,
                    status: TrainStatus::Ok,
                    epochs_completed: 1,
                },
            )?;
        }
        mean_acc.push(sum / model.seeds as f64);
    }

    let n = archs.len() as f64;
    let u_acc: Vec<f64> = mid_ranks(&mean_acc).into_iter().map(|r| r / n).collect();
    let noise: Vec<f64> = (0..archs.len()).map(|_| rng.random::<f64>()).collect();
    let u_noise: Vec<f64> = mid_ranks(&noise).into_iter().map(|r| r / n).collect();
    let blend = |alpha: f64| -> Vec<f64> {
        u_acc
            .iter()
            .zip(&u_noise)
            .map(|(a, z)| alpha * a + (1.0 - alpha.abs()) * z)
            .collect()
    };
    let measure = |p: &[f64]| spearman(p, &mean_acc).map_err(|e| BenchError::Calibration(e.to_string()));

    // ρ(α) rises from −1 at α = −1 to 1 at α = 1.
    let (mut lo, mut hi) = (-1.0, 1.0);
    let mut found = None;
    for step in 0..MAX_BISECTIONS {
        let mid = match step {
            0 if target_rho.abs() == 1.0 => target_rho,
            _ => 0.5 * (lo + hi),
        };
        let p = blend(mid);
        let r = measure(&p)?;
        if (r - target_rho).abs() <= CALIBRATION_TOLERANCE {
            found = Some((mid, p, r));
            break;
        }
        if r < target_rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (alpha, proxy, rho) = found.ok_or_else(|| {
        BenchError::Calibration(format!(
            "no blend within {CALIBRATION_TOLERANCE} of rho {target_rho} after {MAX_BISECTIONS} bisections"
        ))
    })?;
    Ok(SyntheticTabular {
        bench,
        proxy: names.into_iter().zip(proxy).collect(),
        target_rho,
        measured_rho: rho,
        alpha,
    })
}
