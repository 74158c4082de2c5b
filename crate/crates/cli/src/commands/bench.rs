use clap::{Args, Subcommand};
use serde_json::json;
use zcnas::bench::{build_minibench, gen_synthetic_tabular, TrainStatus};
use zcnas::proxy::{Metric, ScoreCache};

use super::config_value;
use super::score::load_config;
use crate::manifest::{Manifest, OutputDir};
use crate::{CliError, Common};

pub const BENCH_FILE: &str = "bench.jsonl";
pub const PROXY_FILE: &str = "proxy.jsonl";

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Train every architecture of the space for each configured seed.
    Build(BuildArgs),
    /// Generate accuracies and a proxy with a chosen rank correlation.
    Synthetic(SyntheticArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub common: Common,
    /// Continue an interrupted build in the same output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct SyntheticArgs {
    #[command(flatten)]
    pub common: Common,
    /// Target Spearman ρ between proxy and accuracy.
    #[arg(long, allow_hyphen_values = true)]
    pub rho: f64,
    /// Metric name recorded in the proxy file.
    #[arg(long, default_value = "synflow")]
    pub metric: String,
}

pub fn run(c: &BenchCommand, workers: usize) -> Result<(), CliError> {
    match c {
        BenchCommand::Build(a) => build(a, workers),
        BenchCommand::Synthetic(a) => synthetic(a),
    }
}

/// `--seed` selects the dataset; training seeds come from the config.
fn build(a: &BuildArgs, workers: usize) -> Result<(), CliError> {
    let mut cfg = load_config(&a.common, None)?;
    cfg.data_seed = a.common.seed;
    let mb = cfg.minibench();
    let mut out = OutputDir::new(&a.common.out);
    let path = out.path(BENCH_FILE);
    if !a.resume && path.exists() {
        std::fs::remove_file(&path)?;
    }
    std::fs::create_dir_all(&a.common.out)?;
    let bench = build_minibench(&mb, Some(&path), workers)?;
    let failed = bench
        .iter()
        .flat_map(|(_, recs)| recs.iter())
        .filter(|r| r.status == TrainStatus::Failed)
        .count();
    if failed > 0 {
        log::warn!("{failed} training runs failed; recorded with status `failed`");
    }
    let mut manifest = Manifest::new("bench build", json!({}), config_value(&cfg), cfg.seeds.clone());
    load_config(&a.common, Some(&mut manifest))?;
    manifest.notes = json!({ "data_seed": a.common.seed, "architectures": bench.len(), "failed_runs": failed });
    out.existing(BENCH_FILE)?;
    out.finish(manifest)
}

fn synthetic(a: &SyntheticArgs) -> Result<(), CliError> {
    let cfg = load_config(&a.common, None)?;
    let metric: Metric = a
        .metric
        .parse()
        .map_err(|e: zcnas::proxy::ProxyError| CliError::Config(e.to_string()))?;
    if !(a.rho.abs() <= 1.0) {
        return Err(CliError::Config(format!("--rho {} outside [-1, 1]", a.rho)));
    }
    let syn = gen_synthetic_tabular(&cfg.space, a.rho, &cfg.synthetic, a.common.seed)?;
    let mut manifest = Manifest::new(
        "bench synthetic",
        json!({ "rho": a.rho, "metric": metric }),
        config_value(&cfg),
        vec![a.common.seed],
    );
    load_config(&a.common, Some(&mut manifest))?;
    manifest.notes = json!({ "measured_rho": syn.measured_rho, "alpha": syn.alpha });
    let mut out = OutputDir::new(&a.common.out);
    out.add(BENCH_FILE, syn.bench.render());
    out.add(PROXY_FILE, ScoreCache::render(&syn.proxy_entries(metric, a.common.seed)));
    out.finish(manifest)
}
