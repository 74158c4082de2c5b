use std::collections::HashSet;
use std::path::Path;

use clap::{ArgGroup, Args};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;
use zcnas::proxy::{score, ScoreCache, ScoreEntry};
use zcnas::space::Architecture;

use super::{config_value, metrics, proxy_batch};
use crate::manifest::{Manifest, OutputDir};
use crate::{CliError, Common, Config};

pub const SCORES_FILE: &str = "scores.jsonl";

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("which").required(true).args(["arch", "all", "sample"])))]
pub struct ScoreArgs {
    #[command(flatten)]
    pub common: Common,
    /// `all` or a comma-separated list.
    #[arg(long, default_value = "all")]
    pub metrics: String,
    /// Canonical architecture string; repeatable.
    #[arg(long)]
    pub arch: Vec<String>,
    /// Every architecture of the space.
    #[arg(long)]
    pub all: bool,
    /// This many distinct random architectures.
    #[arg(long)]
    pub sample: Option<usize>,
}

/// Loads the config named by `common`, recording a config file as an input.
pub fn load_config(common: &Common, manifest: Option<&mut Manifest>) -> Result<Config, CliError> {
    let cfg = Config::resolve(&common.config, &common.overrides)?;
    if let Some(m) = manifest {
        if Path::new(&common.config).is_file() {
            m.input(Path::new(&common.config))?;
        }
    }
    Ok(cfg)
}

pub fn run(a: &ScoreArgs, workers: usize) -> Result<(), CliError> {
    let mut cfg = load_config(&a.common, None)?;
    cfg.init.seed = a.common.seed;
    cfg.proxy.seed = a.common.seed;
    let metrics = metrics(&a.metrics)?;
    let space = cfg.space.clone();

    let archs: Vec<Architecture> = if a.all {
        space.enumerate(u128::MAX)?.collect()
    } else if let Some(n) = a.sample {
        let mut rng = ChaCha8Rng::seed_from_u64(a.common.seed);
        let n = (n as u128).min(space.size()) as usize;
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let x = space.random(&mut rng);
            if seen.insert(x.clone()) {
                out.push(x);
            }
        }
        out
    } else {
        a.arch
            .iter()
            .map(|s| space.parse(s).map_err(|e| CliError::Config(e.to_string())))
            .collect::<Result<_, _>>()?
    };

    let req = cfg.request();
    let batch = proxy_batch(&cfg, &metrics)?;
    let cache = ScoreCache::new();
    let one = |x: &Architecture| score(x, &req, &metrics, batch.as_ref(), &cache);
    let results: Vec<_> = if workers > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?
            .install(|| archs.par_iter().map(one).collect::<Result<Vec<_>, _>>())?
    } else {
        archs.iter().map(one).collect::<Result<Vec<_>, _>>()?
    };
    let entries: Vec<ScoreEntry> = results.into_iter().flat_map(|m| m.into_values()).collect();
    let failed: Vec<&ScoreEntry> = entries.iter().filter(|e| e.value.is_none()).collect();

    let mut manifest = Manifest::new(
        "score",
        json!({
            "metrics": metrics,
            "arch": a.arch,
            "all": a.all,
            "sample": a.sample,
        }),
        config_value(&cfg),
        vec![a.common.seed],
    );
    load_config(&a.common, Some(&mut manifest))?;
    manifest.notes = json!({ "entries": entries.len(), "failed": failed.len() });
    let mut out = OutputDir::new(&a.common.out);
    out.add(SCORES_FILE, ScoreCache::render(&entries));
    let summary: Vec<String> = failed
        .iter()
        .map(|e| format!("{} {}: {}", e.arch, e.metric, e.error.as_deref().unwrap_or("failed")))
        .collect();
    out.finish(manifest)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Partial(format!(
            "{} of {} metric evaluations failed:\n  {}",
            failed.len(),
            entries.len(),
            summary.join("\n  ")
        )))
    }
}
