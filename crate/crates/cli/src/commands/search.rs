use std::path::PathBuf;

use clap::Args;
use serde_json::json;
use zcnas::analysis::Table;
use zcnas::bench::TabularBenchmark;
use zcnas::proxy::{Metric, ScoreCache};
use zcnas::search::{run_experiment, summarize, Algorithm, LiveProxy, ProxyOracle, SearchConfig, TableProxy};

use super::score::load_config;
use super::{config_value, proxy_batch};
use crate::manifest::{Manifest, OutputDir};
use crate::svg::{line_chart, Series};
use crate::{CliError, Common};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const CHART_FILE: &str = "summary.svg";

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub common: Common,
    /// `rand`, `ae`, `rl` or `predictor`.
    #[arg(long)]
    pub algo: String,
    /// Tabular benchmark file.
    #[arg(long)]
    pub bench: PathBuf,
    /// Precomputed proxy score file.
    #[arg(long, conflicts_with = "live_proxy")]
    pub proxy_table: Option<PathBuf>,
    /// Score architectures on demand instead of reading a table.
    #[arg(long)]
    pub live_proxy: bool,
    /// Metric used for warmup and move proposal.
    #[arg(long, default_value = "synflow")]
    pub metric: String,
    /// Proxy-scored warmup models; 0 disables warmup.
    #[arg(long, default_value_t = 0)]
    pub warmup: usize,
    /// Proxy evaluations per move; 0 disables move proposal.
    #[arg(long = "move", default_value_t = 0)]
    pub move_ratio: usize,
    /// Trained-model budget per run.
    #[arg(long, default_value_t = 100)]
    pub budget: usize,
    #[arg(long, default_value_t = 32)]
    pub repeats: usize,
}

pub fn run(a: &SearchArgs, workers: usize) -> Result<(), CliError> {
    let cfg = load_config(&a.common, None)?;
    let algorithm: Algorithm = a.algo.parse().map_err(|e: zcnas::search::SearchError| CliError::Config(e.to_string()))?;
    let metric: Metric = a
        .metric
        .parse()
        .map_err(|e: zcnas::proxy::ProxyError| CliError::Config(e.to_string()))?;
    if a.repeats == 0 {
        return Err(CliError::Config("--repeats must be at least 1".into()));
    }
    let uses_proxy = a.warmup > 0 || a.move_ratio > 0;
    if uses_proxy && a.proxy_table.is_none() && !a.live_proxy {
        return Err(CliError::Config(
            "--warmup and --move need --proxy-table or --live-proxy".into(),
        ));
    }
    let search = SearchConfig {
        algorithm,
        budget: a.budget,
        warmup: a.warmup,
        move_ratio: a.move_ratio,
        metric,
        ae: cfg.ae,
        rl: cfg.rl.clone(),
        predictor: cfg.predictor.clone(),
        seed: a.common.seed,
    };
    search.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let mut manifest = Manifest::new(
        "search",
        json!({
            "search": search,
            "repeats": a.repeats,
            "live_proxy": a.live_proxy,
        }),
        config_value(&cfg),
        (0..a.repeats as u64).map(|r| a.common.seed.wrapping_add(r)).collect(),
    );
    load_config(&a.common, Some(&mut manifest))?;
    manifest.input(&a.bench)?;
    let bench = TabularBenchmark::load(&a.bench)?;

    let oracle: Box<dyn ProxyOracle> = match (&a.proxy_table, a.live_proxy) {
        (Some(p), _) => {
            manifest.input(p)?;
            let entries = ScoreCache::parse(&std::fs::read_to_string(p)?)?;
            Box::new(TableProxy::from_entries(bench.space.clone(), &entries, metric))
        }
        (None, true) => {
            let mut request = cfg.request();
            request.space = bench.space.clone();
            Box::new(LiveProxy {
                request,
                metric,
                batch: proxy_batch(&cfg, &[metric])?,
                cache: ScoreCache::new(),
            })
        }
        (None, false) => Box::new(TableProxy::new(bench.space.clone(), [])),
    };

    let traces = run_experiment(&bench, oracle.as_ref(), &search, a.repeats, workers)?;
    let mut out = OutputDir::new(&a.common.out);
    for (r, t) in traces.iter().enumerate() {
        let seed = a.common.seed.wrapping_add(r as u64);
        let meta = json!({ "algorithm": algorithm, "seed": seed, "warmup": a.warmup, "move": a.move_ratio, "metric": metric });
        out.add(format!("traces/seed-{seed}.jsonl"), t.render(meta));
    }
    let summary = summarize(&traces, a.budget);
    let mut table = Table::new(["step", "median", "q25", "q75"]);
    for s in &summary {
        table.push([
            s.step.to_string(),
            Table::num(Some(s.median)),
            Table::num(Some(s.q25)),
            Table::num(Some(s.q75)),
        ]);
    }
    out.add(SUMMARY_FILE, table.to_csv());
    let series = Series {
        name: algorithm.id().to_string(),
        points: summary.iter().map(|s| (s.step as f64, s.median)).collect(),
        band: summary.iter().map(|s| (s.step as f64, s.q25, s.q75)).collect(),
    };
    out.add(
        CHART_FILE,
        line_chart(
            &format!("{} over {} runs", algorithm.id(), a.repeats),
            "trained models",
            "best test accuracy",
            &[series],
        ),
    );
    manifest.notes = json!({
        "final_median": summary.last().map(|s| s.median),
        "proxy_evals": traces.iter().map(|t| t.proxy_evals).sum::<usize>(),
        "fallbacks": traces.iter().map(|t| t.diagnostics.fallbacks).sum::<usize>(),
    });
    out.finish(manifest)
}
