use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{gen_dataset, DatasetSpec, SyntheticDataset};
use super::tabular::TabularBenchmark;
use super::train::{train, TrainConfig, TrainRecord, TrainStatus};
use super::BenchError;
use crate::engine::InitConfig;
use crate::space::{self, Architecture, ScaleConfig, SpaceSpec};

/// Everything that determines a mini-benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinibenchConfig {
    pub space: SpaceSpec,
    pub scale: ScaleConfig,
    pub dataset: DatasetSpec,
    pub data_seed: u64,
    pub train: TrainConfig,
    /// Initialization scheme; the seed field is replaced per run.
    pub init: InitConfig,
    pub seeds: Vec<u64>,
}

impl Default for MinibenchConfig {
    fn default() -> Self {
        MinibenchConfig {
            space: SpaceSpec::mini(),
            scale: ScaleConfig::default(),
            dataset: DatasetSpec::default(),
            data_seed: 0,
            train: TrainConfig::default(),
            init: InitConfig::default(),
            seeds: vec![0, 1, 2],
        }
    }
}

impl MinibenchConfig {
    pub fn dataset(&self) -> Result<SyntheticDataset, BenchError> {
        let mut spec = self.dataset;
        spec.resolution = self.scale.resolution;
        spec.classes = self.scale.classes;
        gen_dataset(&spec, self.data_seed)
    }
}

/// Trains `arch` once with init and training seed `seed`. Errors during
/// training become a failed record.
pub fn train_arch(
    space: &SpaceSpec,
    arch: &Architecture,
    scale: &ScaleConfig,
    data: &SyntheticDataset,
    cfg: &TrainConfig,
    init: &InitConfig,
    seed: u64,
) -> Result<TrainRecord, BenchError> {
    let init = InitConfig { seed, ..*init };
    let cfg = TrainConfig { seed, ..*cfg };
    cfg.validate()?;
    let mut net = space::materialize(space, arch, scale, &init)?;
    match train(&mut net, data, &cfg) {
        Ok(r) => Ok(r),
        Err(e) => {
            log::warn!("training {} (seed {seed}) failed: {e}", space.to_string(arch));
            Ok(TrainRecord {
                seed,
                val_acc: vec![0.0; cfg.epochs],
                test_acc: 0.0,
                status: TrainStatus::Failed,
                epochs_completed: 0,
            })
        }
    }
}

/// Trains every architecture of the space once per seed.
///
/// With `out`, records are appended to the file as they finish and pairs
/// already present are skipped, so an interrupted build resumes where it
/// stopped; the file is rewritten in canonical order at the end. `workers`
/// bounds the number of concurrent trainings.
pub fn build_minibench(
    cfg: &MinibenchConfig,
    out: Option<&Path>,
    workers: usize,
) -> Result<TabularBenchmark, BenchError> {
    let data = cfg.dataset()?;
    cfg.train.validate()?;
    let meta = serde_json::to_value(cfg).expect("config serializes");
    let mut bench = match out {
        Some(p) if p.exists() => {
            let b = TabularBenchmark::load(p)?;
            if b.meta != meta {
                return Err(BenchError::InvalidConfig(format!(
                    "{} was built with a different configuration",
                    p.display()
                )));
            }
            b
        }
        _ => {
            let mut b = TabularBenchmark::new(cfg.space.clone());
            b.meta = meta;
            b
        }
    };
    if let Some(p) = out {
        bench.init_file(p)?;
    }

    let archs: Vec<Architecture> = cfg.space.enumerate(u128::MAX).map_err(BenchError::from)?.collect();
    let todo: Vec<(String, &Architecture, u64)> = archs
        .iter()
        .flat_map(|a| {
            let s = cfg.space.to_string(a);
            cfg.seeds.iter().map(move |&seed| (s.clone(), a, seed))
        })
        .filter(|(s, _, seed)| !bench.contains(s, *seed))
        .collect();
    log::info!("{} of {} runs to train", todo.len(), archs.len() * cfg.seeds.len());

    let done = Mutex::new(Vec::with_capacity(todo.len()));
    let run = |(name, arch, seed): &(String, &Architecture, u64)| -> Result<(), BenchError> {
        let rec = train_arch(&cfg.space, arch, &cfg.scale, &data, &cfg.train, &cfg.init, *seed)?;
        let mut guard = done.lock().expect("results lock");
        if let Some(p) = out {
            TabularBenchmark::append(p, name, &rec)?;
        }
        guard.push((name.clone(), rec));
        Ok(())
    };
    if workers <= 1 {
        todo.iter().try_for_each(run)?;
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| BenchError::InvalidConfig(e.to_string()))?
            .install(|| todo.par_iter().try_for_each(run))?;
    }
    for (name, rec) in done.into_inner().expect("results lock") {
        bench.insert(&name, rec)?;
    }
    if let Some(p) = out {
        bench.save(p)?;
    }
    Ok(bench)
}
