//! `key = value` run configuration with two built-in presets.

use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use zcnas::bench::{DatasetSpec, MinibenchConfig, NoiseModel, TrainConfig};
use zcnas::engine::InitConfig;
use zcnas::proxy::{ProxyConfig, ScoreRequest};
use zcnas::search::{AeConfig, PredictorConfig, RlConfig};
use zcnas::space::{CellOp, ScaleConfig, SpaceSpec};

use crate::CliError;

const MINI: &str = include_str!("../presets/mini.conf");
const NB201_LIKE: &str = include_str!("../presets/nb201-like.conf");

pub const PRESETS: [&str; 2] = ["mini", "nb201-like"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Config {
    pub space: SpaceSpec,
    pub scale: ScaleConfig,
    pub dataset: DatasetSpec,
    pub data_seed: u64,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub init: InitConfig,
    pub proxy: ProxyConfig,
    pub synthetic: NoiseModel,
    pub ae: AeConfig,
    pub rl: RlConfig,
    pub predictor: PredictorConfig,
}

impl Default for Config {
    fn default() -> Self {
        let mb = MinibenchConfig::default();
        Config {
            space: mb.space,
            scale: mb.scale,
            dataset: mb.dataset,
            data_seed: mb.data_seed,
            train: mb.train,
            seeds: mb.seeds,
            init: mb.init,
            proxy: ProxyConfig::default(),
            synthetic: NoiseModel::default(),
            ae: AeConfig::default(),
            rl: RlConfig::default(),
            predictor: PredictorConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Config(format!("`{key}`: cannot parse `{value}`: {e}")))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl Config {
    /// A preset name or a config file path, followed by `key=value`
    /// overrides.
    pub fn resolve(source: &str, overrides: &[String]) -> Result<Config, CliError> {
        let text = match source {
            "mini" => MINI.to_string(),
            "nb201-like" => NB201_LIKE.to_string(),
            path => std::fs::read_to_string(Path::new(path))
                .map_err(|e| CliError::Config(format!("cannot read config `{path}`: {e}")))?,
        };
        let mut cfg = Config::default();
        let mut nodes = cfg.space.n_nodes;
        let mut ops = cfg.space.ops.clone();
        let mut apply = |cfg: &mut Config, line: &str, origin: &str| -> Result<(), CliError> {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{origin}: expected `key = value`, found `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "space.nodes" => nodes = parse(k, v)?,
                "space.ops" => ops = list::<CellOp>(k, v)?,
                _ => cfg.set(k, v)?,
            }
            Ok(())
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if !line.is_empty() {
                apply(&mut cfg, line, &format!("{source}:{}", i + 1))?;
            }
        }
        for o in overrides {
            apply(&mut cfg, o, "--set")?;
        }
        cfg.space = SpaceSpec::new(nodes, ops).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    fn set(&mut self, k: &str, v: &str) -> Result<(), CliError> {
        match k {
            "scale.resolution" => self.scale.resolution = parse(k, v)?,
            "scale.channels" => self.scale.channels = parse(k, v)?,
            "scale.cells_per_stage" => self.scale.cells_per_stage = parse(k, v)?,
            "scale.stages" => self.scale.stages = parse(k, v)?,
            "scale.classes" => self.scale.classes = parse(k, v)?,
            "dataset.train" => self.dataset.train = parse(k, v)?,
            "dataset.val" => self.dataset.val = parse(k, v)?,
            "dataset.test" => self.dataset.test = parse(k, v)?,
            "dataset.noise" => self.dataset.noise = parse(k, v)?,
            "dataset.seed" => self.data_seed = parse(k, v)?,
            "train.lr" => self.train.lr = parse(k, v)?,
            "train.momentum" => self.train.momentum = parse(k, v)?,
            "train.nesterov" => self.train.nesterov = parse(k, v)?,
            "train.weight_decay" => self.train.weight_decay = parse(k, v)?,
            "train.epochs" => self.train.epochs = parse(k, v)?,
            "train.batch_size" => self.train.batch_size = parse(k, v)?,
            "train.flip" => self.train.flip = parse(k, v)?,
            "train.crop" => self.train.crop = parse(k, v)?,
            "seeds" => self.seeds = list(k, v)?,
            "init.scheme" => self.init.scheme = parse(k, v)?,
            "init.bias" => self.init.bias_mode = parse(k, v)?,
            "proxy.batch_size" => self.proxy.batch_size = parse(k, v)?,
            "proxy.data_mode" => self.proxy.data_mode = parse(k, v)?,
            "proxy.jacob_eps" => self.proxy.jacob_eps = parse(k, v)?,
            "proxy.param_scope" => self.proxy.param_scope = parse(k, v)?,
            "proxy.synflow_log_domain" => self.proxy.synflow_log_domain = parse(k, v)?,
            "synthetic.base" => self.synthetic.base = parse(k, v)?,
            "synthetic.op_weight" => self.synthetic.op_weight = parse(k, v)?,
            "synthetic.edge_effect" => self.synthetic.edge_effect = parse(k, v)?,
            "synthetic.interaction" => self.synthetic.interaction = parse(k, v)?,
            "synthetic.arch_noise" => self.synthetic.arch_noise = parse(k, v)?,
            "synthetic.seed_noise" => self.synthetic.seed_noise = parse(k, v)?,
            "synthetic.seeds" => self.synthetic.seeds = parse(k, v)?,
            "search.ae.pool" => self.ae.pool = parse(k, v)?,
            "search.ae.sample" => self.ae.sample = parse(k, v)?,
            "search.rl.lr" => self.rl.lr = parse(k, v)?,
            "search.rl.baseline_decay" => self.rl.baseline_decay = parse(k, v)?,
            "search.predictor.per_round" => self.predictor.per_round = parse(k, v)?,
            "search.predictor.candidates" => self.predictor.candidates = parse(k, v)?,
            "search.predictor.hidden" => self.predictor.hidden = parse(k, v)?,
            "search.predictor.epochs" => self.predictor.epochs = parse(k, v)?,
            "search.predictor.steps" => self.predictor.steps = parse(k, v)?,
            "search.predictor.batch" => self.predictor.batch = parse(k, v)?,
            "search.predictor.lr" => self.predictor.lr = parse(k, v)?,
            "search.predictor.momentum" => self.predictor.momentum = parse(k, v)?,
            other => return Err(CliError::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn minibench(&self) -> MinibenchConfig {
        MinibenchConfig {
            space: self.space.clone(),
            scale: self.scale,
            dataset: self.dataset,
            data_seed: self.data_seed,
            train: self.train,
            init: self.init,
            seeds: self.seeds.clone(),
        }
    }

    /// Proxy request; the data tag identifies the generated dataset.
    pub fn request(&self) -> ScoreRequest {
        let mut req = ScoreRequest::new(self.space.clone(), self.scale);
        req.init = self.init;
        req.proxy = self.proxy.clone();
        req.data_tag = format!(
            "synthetic:{}",
            serde_json::json!({ "spec": self.minibench().dataset, "seed": self.data_seed, "scale": self.scale })
        );
        req
    }
}
