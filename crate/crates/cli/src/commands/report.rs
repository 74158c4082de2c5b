use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use zcnas::analysis::{
    cluster_analysis, epoch_correlations, sensitivity_sweep, top_fraction_spearman, top_n_count, top_overlap,
    RankedTable, SweepAxes, Table,
};
use zcnas::bench::TabularBenchmark;
use zcnas::engine::{BiasMode, InitScheme};
use zcnas::proxy::{vote_rank, Metric, ScoreCache, ScoreEntry, VOTE_METRICS};
use zcnas::space::Architecture;

use super::score::load_config;
use super::{config_value, metrics};
use crate::manifest::{Manifest, OutputDir};
use crate::svg::{bar_chart, line_chart, Series};
use crate::{CliError, Common};

/// Column name of the combined ranking.
pub const VOTE: &str = "vote";

#[derive(Debug, Subcommand)]
pub enum ReportCommand {
    /// Spearman ρ of each metric, plus validation accuracy per epoch, against final accuracy.
    Correlate(CorrelateArgs),
    /// Global and top-10% ρ, top-10% overlap, top-64 counts and neighborhood clusters.
    Tables(TablesArgs),
    /// ρ under varied seeds, initializations and minibatch sizes.
    Sensitivity(SensitivityArgs),
}

#[derive(Debug, Args)]
pub struct Inputs {
    /// Tabular benchmark file.
    #[arg(long)]
    pub bench: PathBuf,
    /// Score file from `zcnas score` or `zcnas bench synthetic`.
    #[arg(long)]
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub inputs: Inputs,
}

#[derive(Debug, Args)]
pub struct TablesArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub inputs: Inputs,
    /// Random cluster centers; clusters need scores for the whole space.
    #[arg(long, default_value_t = 1000)]
    pub clusters: usize,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub common: Common,
    /// Tabular benchmark file supplying ground-truth accuracy.
    #[arg(long)]
    pub bench: PathBuf,
    /// Benchmark architectures to score; all when larger than the bench.
    #[arg(long, default_value_t = 50)]
    pub sample: usize,
    #[arg(long, default_value = "all")]
    pub metrics: String,
    /// Initialization seeds, comma-separated.
    #[arg(long, default_value = "0,1,2")]
    pub seeds: String,
    /// `scheme/bias` pairs, comma-separated.
    #[arg(long, default_value = "default/scheme-default,kaiming-normal/zero,xavier-uniform/zero")]
    pub inits: String,
    /// Minibatch sizes, comma-separated.
    #[arg(long, default_value = "32,64,128")]
    pub batch_sizes: String,
}

pub fn run(c: &ReportCommand, workers: usize) -> Result<(), CliError> {
    match c {
        ReportCommand::Correlate(a) => correlate(a),
        ReportCommand::Tables(a) => tables(a),
        ReportCommand::Sensitivity(a) => sensitivity(a, workers),
    }
}

/// A column of proxy values per metric over the scored benchmark
/// architectures, in benchmark order.
struct Columns {
    archs: Vec<String>,
    accuracy: Vec<f64>,
    proxy: BTreeMap<String, Vec<Option<f64>>>,
}

impl Columns {
    fn table(&self, name: &str) -> RankedTable {
        RankedTable::new(self.archs.clone(), self.proxy[name].clone(), self.accuracy.clone())
            .expect("columns share one length")
    }
}

fn load_bench(path: &Path, manifest: &mut Manifest) -> Result<TabularBenchmark, CliError> {
    manifest.input(path)?;
    Ok(TabularBenchmark::load(path)?)
}

fn load_columns(bench: &TabularBenchmark, scores: &Path, manifest: &mut Manifest) -> Result<Columns, CliError> {
    manifest.input(scores)?;
    let entries: Vec<ScoreEntry> = ScoreCache::parse(&std::fs::read_to_string(scores)?)?;
    let mut by_metric: BTreeMap<Metric, HashMap<&str, Option<f64>>> = BTreeMap::new();
    for e in &entries {
        if bench.records(&e.arch).is_none() {
            return Err(CliError::Input(format!("scored architecture `{}` is not in the benchmark", e.arch)));
        }
        by_metric.entry(e.metric).or_default().insert(&e.arch, e.value);
    }
    if by_metric.is_empty() {
        return Err(CliError::Input(format!("`{}` holds no scores", scores.display())));
    }
    let archs: Vec<String> = bench
        .archs()
        .filter(|a| by_metric.values().any(|m| m.contains_key(a)))
        .map(str::to_string)
        .collect();
    let accuracy: Vec<f64> = archs.iter().map(|a| bench.mean_accuracy(a).expect("arch has records")).collect();
    let mut proxy: BTreeMap<String, Vec<Option<f64>>> = by_metric
        .iter()
        .map(|(m, vals)| (m.id().to_string(), archs.iter().map(|a| vals.get(a.as_str()).copied().flatten()).collect()))
        .collect();
    if VOTE_METRICS.iter().all(|m| by_metric.contains_key(m)) {
        proxy.insert(VOTE.to_string(), vote_column(&archs, &by_metric)?);
    }
    Ok(Columns { archs, accuracy, proxy })
}

/// Vote position as a score (higher is better) for architectures with all
/// three voting metrics present.
fn vote_column(
    archs: &[String],
    by_metric: &BTreeMap<Metric, HashMap<&str, Option<f64>>>,
) -> Result<Vec<Option<f64>>, CliError> {
    let mut models = Vec::new();
    let mut slot = Vec::new();
    for (i, a) in archs.iter().enumerate() {
        let triple: Option<BTreeMap<Metric, f64>> = VOTE_METRICS
            .iter()
            .map(|m| by_metric[m].get(a.as_str()).copied().flatten().map(|v| (*m, v)))
            .collect();
        if let Some(t) = triple {
            models.push((a.clone(), t));
            slot.push(i);
        }
    }
    let mut out = vec![None; archs.len()];
    let order = vote_rank(&models)?;
    let n = order.len();
    for (pos, &m) in order.iter().enumerate() {
        out[slot[m]] = Some((n - pos) as f64);
    }
    Ok(out)
}

fn correlate(a: &CorrelateArgs) -> Result<(), CliError> {
    let cfg = load_config(&a.common, None)?;
    let mut manifest = Manifest::new(
        "report correlate",
        json!({ "bench": a.inputs.bench, "scores": a.inputs.scores }),
        config_value(&cfg),
        vec![a.common.seed],
    );
    load_config(&a.common, Some(&mut manifest))?;
    let bench = load_bench(&a.inputs.bench, &mut manifest)?;
    let mut out = OutputDir::new(&a.common.out);

    if let Some(scores) = &a.inputs.scores {
        let cols = load_columns(&bench, scores, &mut manifest)?;
        let mut table = Table::new(["metric", "rho", "n", "excluded"]);
        let (mut labels, mut values) = (Vec::new(), Vec::new());
        for name in cols.proxy.keys() {
            let t = cols.table(name);
            let rho = t.spearman().ok();
            table.push([
                name.clone(),
                Table::num(rho),
                (t.len() - t.excluded()).to_string(),
                t.excluded().to_string(),
            ]);
            labels.push(name.clone());
            values.push(rho);
        }
        out.add("correlate.csv", table.to_csv());
        out.add("correlate.svg", bar_chart("Rank correlation with final accuracy", "Spearman rho", &labels, &values));
    }

    let names: Vec<&str> = bench.archs().collect();
    let curves: Vec<Vec<f64>> = names.iter().filter_map(|n| bench.mean_curve(n)).collect();
    let finals: Vec<f64> = names.iter().filter_map(|n| bench.mean_accuracy(n)).collect();
    let rhos = epoch_correlations(&curves, &finals);
    if !rhos.is_empty() {
        let mut table = Table::new(["epoch", "rho"]);
        for (e, r) in rhos.iter().enumerate() {
            table.push([(e + 1).to_string(), Table::num(*r)]);
        }
        out.add("epoch_rho.csv", table.to_csv());
        let series = Series {
            name: "validation accuracy".into(),
            points: rhos
                .iter()
                .enumerate()
                .filter_map(|(e, r)| r.map(|r| ((e + 1) as f64, r)))
                .collect(),
            band: Vec::new(),
        };
        out.add(
            "epoch_rho.svg",
            line_chart("Validation accuracy vs final accuracy", "epoch", "Spearman rho", &[series]),
        );
    } else if a.inputs.scores.is_none() {
        return Err(CliError::Input("benchmark has no learning curves and no --scores were given".into()));
    }
    manifest.notes = json!({ "epochs": rhos.len(), "final_rho": rhos.last().copied().flatten() });
    out.finish(manifest)
}

fn tables(a: &TablesArgs) -> Result<(), CliError> {
    let cfg = load_config(&a.common, None)?;
    let scores = a
        .inputs
        .scores
        .as_ref()
        .ok_or_else(|| CliError::Config("`report tables` needs --scores".into()))?;
    let mut manifest = Manifest::new(
        "report tables",
        json!({ "bench": a.inputs.bench, "scores": scores, "clusters": a.clusters }),
        config_value(&cfg),
        vec![a.common.seed],
    );
    load_config(&a.common, Some(&mut manifest))?;
    let bench = load_bench(&a.inputs.bench, &mut manifest)?;
    let cols = load_columns(&bench, scores, &mut manifest)?;
    let names: Vec<String> = cols.proxy.keys().cloned().collect();

    let mut header = vec!["statistic".to_string()];
    header.extend(names.iter().cloned());
    let mut table = Table::new(header);
    type Stat = fn(&RankedTable) -> Option<f64>;
    let stats: [(&str, Stat); 5] = [
        ("spearman", |t| t.spearman().ok()),
        ("spearman_top10", |t| top_fraction_spearman(t, 0.1).ok()),
        ("overlap_top10", |t| top_overlap(t, 0.1).ok()),
        ("top64_in_top5", |t| top_n_count(t, 64, 0.05).ok().map(|c| c as f64)),
        ("excluded", |t| Some(t.excluded() as f64)),
    ];
    let mut spearman = Vec::new();
    for (label, f) in stats {
        let mut row = vec![label.to_string()];
        for n in &names {
            let v = f(&cols.table(n));
            if label == "spearman" {
                spearman.push(v);
            }
            row.push(match label {
                "top64_in_top5" | "excluded" => v.map_or("--".into(), |x| format!("{x:.0}")),
                _ => Table::num(v),
            });
        }
        table.push(row);
    }
    let mut out = OutputDir::new(&a.common.out);
    out.add("table1.csv", table.to_csv());
    out.add("table1.svg", bar_chart("Rank correlation with final accuracy", "Spearman rho", &names, &spearman));

    let space = &bench.space;
    let full = cols.archs.len() as u128 == space.size();
    if full && a.clusters > 0 {
        let mut accuracy = vec![0.0; cols.archs.len()];
        let mut index = vec![0usize; cols.archs.len()];
        for (i, name) in cols.archs.iter().enumerate() {
            let arch: Architecture = space.parse(name)?;
            index[i] = space.index_of(&arch) as usize;
            accuracy[index[i]] = cols.accuracy[i];
        }
        let mut ct = Table::new(["metric", "top_match", "avg_cluster_size", "local_rho", "rho_undefined"]);
        for n in &names {
            let mut proxy = vec![None; cols.archs.len()];
            for (i, v) in cols.proxy[n].iter().enumerate() {
                proxy[index[i]] = *v;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(a.common.seed);
            let r = cluster_analysis(space, &accuracy, &proxy, a.clusters, &mut rng)?;
            ct.push([
                n.clone(),
                Table::num(Some(r.top_match)),
                Table::num(Some(r.avg_cluster_size)),
                Table::num(r.local_rho),
                r.rho_undefined.to_string(),
            ]);
        }
        out.add("clusters.csv", ct.to_csv());
    } else {
        log::info!("scores cover {} of {} architectures; skipping clusters", cols.archs.len(), space.size());
    }
    manifest.notes = json!({ "architectures": cols.archs.len(), "clusters": full && a.clusters > 0 });
    out.finish(manifest)
}

fn list<T: std::str::FromStr>(flag: &str, s: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| x.trim().parse().map_err(|e| CliError::Config(format!("--{flag}: `{x}`: {e}"))))
        .collect()
}

fn sensitivity(a: &SensitivityArgs, workers: usize) -> Result<(), CliError> {
    let cfg = load_config(&a.common, None)?;
    let metrics = metrics(&a.metrics)?;
    let inits = a
        .inits
        .split(',')
        .map(|pair| {
            let (s, b) = pair
                .split_once('/')
                .ok_or_else(|| CliError::Config(format!("--inits: `{pair}` is not scheme/bias")))?;
            let scheme: InitScheme = list("inits", s)?.pop().expect("one item");
            let bias: BiasMode = list("inits", b)?.pop().expect("one item");
            Ok((scheme, bias))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let axes = SweepAxes {
        seeds: list("seeds", &a.seeds)?,
        inits,
        batch_sizes: list("batch-sizes", &a.batch_sizes)?,
    };
    let mut manifest = Manifest::new(
        "report sensitivity",
        json!({ "bench": a.bench, "sample": a.sample, "metrics": metrics, "axes": axes }),
        config_value(&cfg),
        vec![a.common.seed],
    );
    load_config(&a.common, Some(&mut manifest))?;
    let bench = load_bench(&a.bench, &mut manifest)?;

    let mut names: Vec<&str> = bench.archs().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(a.common.seed);
    names.shuffle(&mut rng);
    names.truncate(a.sample);
    names.sort_unstable();
    let archs: Vec<Architecture> = names.iter().map(|n| bench.space.parse(n)).collect::<Result<_, _>>()?;
    let accuracy: Vec<f64> = names.iter().map(|n| bench.mean_accuracy(n).expect("arch has records")).collect();

    let mut base = cfg.request();
    base.space = bench.space.clone();
    let data = if cfg.proxy.data_mode == zcnas::proxy::DataMode::RealBatch {
        Some(cfg.minibench().dataset()?)
    } else {
        None
    };
    let batch_for = |r: &zcnas::proxy::ScoreRequest| {
        data.as_ref()
            .map(|d| d.train.sample_batch(r.proxy.batch_size, r.proxy.seed))
    };
    let cache = zcnas::proxy::ScoreCache::new();
    let rows = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?
        .install(|| sensitivity_sweep(&archs, &accuracy, &base, &axes, &metrics, &batch_for, &cache))?;

    let mut table = Table::new(["axis", "value", "metric", "rho", "excluded"]);
    let mut series: BTreeMap<Metric, Series> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        for (m, cell) in &row.cells {
            table.push([
                row.axis.clone(),
                row.value.clone(),
                m.id().to_string(),
                Table::num(cell.rho),
                cell.excluded.to_string(),
            ]);
            let s = series.entry(*m).or_insert_with(|| Series {
                name: m.id().to_string(),
                ..Series::default()
            });
            if let Some(r) = cell.rho {
                s.points.push(((i + 1) as f64, r));
            }
        }
    }
    let mut out = OutputDir::new(&a.common.out);
    out.add("sensitivity.csv", table.to_csv());
    let series: Vec<Series> = series.into_values().collect();
    out.add(
        "sensitivity.svg",
        line_chart("Sensitivity of rank correlation", "setting (row of sensitivity.csv)", "Spearman rho", &series),
    );
    manifest.notes = json!({ "architectures": archs.len(), "settings": rows.len() });
    out.finish(manifest)
}
