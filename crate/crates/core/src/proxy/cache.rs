use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::metrics::{fisher_from, grad_norm_from, jacob_cov, snip_from, synflow};
use super::{Batch, DataMode, Metric, ProxyConfig, ProxyError};
use crate::engine::{InitConfig, LossSpec};
use crate::io;
use crate::space::{self, Architecture, ScaleConfig, SpaceSpec};

pub const SCORES_FORMAT: &str = "zcnas-scores";

/// Everything that determines a score apart from the architecture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub space: SpaceSpec,
    pub scale: ScaleConfig,
    pub init: InitConfig,
    pub proxy: ProxyConfig,
    /// Identifies the dataset a real batch is drawn from.
    pub data_tag: String,
}

impl ScoreRequest {
    pub fn new(space: SpaceSpec, scale: ScaleConfig) -> Self {
        ScoreRequest {
            space,
            scale,
            init: InitConfig::default(),
            proxy: ProxyConfig::default(),
            data_tag: String::new(),
        }
    }
}

/// Hex digest identifying `(arch, metric, request)`.
pub fn fingerprint(arch: &str, metric: Metric, req: &ScoreRequest) -> String {
    let key = json!({ "arch": arch, "metric": metric, "request": req });
    io::sha256_hex(serde_json::to_string(&key).expect("request serializes").as_bytes())[..32].to_string()
}

/// One line of a score file. A failed metric has no value.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreEntry {
    pub arch: String,
    pub metric: Metric,
    pub value: Option<f64>,
    pub fingerprint: String,
    pub error: Option<String>,
}

impl ScoreEntry {
    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "arch": self.arch,
            "metric": self.metric,
            "value": match self.value {
                Some(x) => json!(x),
                None => json!("failed"),
            },
            "fingerprint": self.fingerprint,
        });
        if let Some(e) = &self.error {
            v["error"] = json!(e);
        }
        v
    }

    pub fn from_json(v: &Value) -> Result<Self, String> {
        let s = |k: &str| v.get(k).and_then(Value::as_str).map(String::from).ok_or(format!("missing `{k}`"));
        let metric: Metric = serde_json::from_value(v.get("metric").cloned().unwrap_or(Value::Null))
            .map_err(|e| format!("metric: {e}"))?;
        let value = match v.get("value") {
            Some(Value::String(t)) if t == "failed" => None,
            Some(x) => Some(x.as_f64().ok_or("value is not a number")?),
            None => return Err("missing `value`".into()),
        };
        Ok(ScoreEntry {
            arch: s("arch")?,
            metric,
            value,
            fingerprint: s("fingerprint")?,
            error: v.get("error").and_then(Value::as_str).map(String::from),
        })
    }
}

/// Scores keyed by fingerprint; safe for concurrent lookup and insert.
#[derive(Debug, Default)]
pub struct ScoreCache {
    entries: RwLock<HashMap<String, ScoreEntry>>,
}

impl ScoreCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, fingerprint: &str) -> Option<ScoreEntry> {
        self.entries.read().expect("cache lock").get(fingerprint).cloned()
    }

    pub fn insert(&self, entry: ScoreEntry) {
        self.entries
            .write()
            .expect("cache lock")
            .insert(entry.fingerprint.clone(), entry);
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entries sorted by architecture string, then metric.
    pub fn entries(&self) -> Vec<ScoreEntry> {
        let mut all: Vec<ScoreEntry> = self.entries.read().expect("cache lock").values().cloned().collect();
        all.sort_by(|a, b| (&a.arch, a.metric, &a.fingerprint).cmp(&(&b.arch, b.metric, &b.fingerprint)));
        all
    }

    pub fn render(entries: &[ScoreEntry]) -> String {
        io::render_jsonl(&io::header(SCORES_FORMAT, json!({})), entries.iter().map(ScoreEntry::to_json))
    }

    pub fn parse(text: &str) -> Result<Vec<ScoreEntry>, ProxyError> {
        let (_, records) = io::parse_jsonl(text, SCORES_FORMAT).map_err(ProxyError::Cache)?;
        records
            .iter()
            .map(|r| ScoreEntry::from_json(r).map_err(ProxyError::Cache))
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self, ProxyError> {
        let cache = ScoreCache::new();
        if path.exists() {
            for e in Self::parse(&std::fs::read_to_string(path)?)? {
                cache.insert(e);
            }
        }
        Ok(cache)
    }

    pub fn save(&self, path: &Path) -> Result<(), ProxyError> {
        io::atomic_write(path, Self::render(&self.entries()).as_bytes())?;
        Ok(())
    }
}

/// Materializes `arch` once and evaluates every requested metric on the
/// same initialization and minibatch. Cached fingerprints are served
/// without recomputation. A metric that fails yields an entry without a
/// value; only configuration problems are returned as errors.
///
/// `real` is required when a data-consuming metric runs in
/// [`DataMode::RealBatch`]; it is used as given.
pub fn score(
    arch: &Architecture,
    req: &ScoreRequest,
    metrics: &[Metric],
    real: Option<&Batch>,
    cache: &ScoreCache,
) -> Result<BTreeMap<Metric, ScoreEntry>, ProxyError> {
    let arch_str = req.space.to_string(arch);
    let mut out = BTreeMap::new();
    let mut todo = Vec::new();
    for &m in metrics {
        let fp = fingerprint(&arch_str, m, req);
        match cache.get(&fp) {
            Some(hit) => {
                out.insert(m, hit);
            }
            None => todo.push((m, fp)),
        }
    }
    if todo.is_empty() {
        return Ok(out);
    }

    let cfg = &req.proxy;
    let mut net = space::materialize(&req.space, arch, &req.scale, &req.init)?;
    let needs_data = todo.iter().any(|(m, _)| m.uses_data());
    let synthetic;
    let batch = if !needs_data {
        None
    } else if cfg.data_mode == DataMode::RealBatch {
        Some(real.ok_or(ProxyError::MissingBatch)?)
    } else {
        if cfg.batch_size == 0 {
            return Err(ProxyError::InvalidConfig("batch size must be positive".into()));
        }
        synthetic = Batch::synthetic(
            cfg.data_mode,
            net.input_shape(),
            req.scale.classes,
            cfg.batch_size,
            cfg.seed,
        );
        Some(&synthetic)
    };

    let mut ce_grads = None;
    for (m, fp) in todo {
        let result: Result<f64, ProxyError> = match m {
            Metric::GradNorm | Metric::Snip | Metric::Fisher => {
                let b = batch.expect("data metric has a batch");
                if ce_grads.is_none() {
                    ce_grads = Some(net.backward(&LossSpec::cross_entropy(&b.targets), &b.inputs).map_err(ProxyError::from));
                }
                match ce_grads.as_ref().expect("just set") {
                    Ok(g) => match m {
                        Metric::GradNorm => Ok(grad_norm_from(&net, g, cfg.param_scope)),
                        Metric::Snip => Ok(snip_from(&net, g, cfg.param_scope)),
                        _ => fisher_from(&net, g),
                    },
                    Err(e) => Err(ProxyError::Degenerate(e.to_string())),
                }
            }
            Metric::Grasp => {
                let b = batch.expect("data metric has a batch");
                super::grasp(&mut net, &LossSpec::cross_entropy(&b.targets), &b.inputs, cfg.param_scope)
            }
            Metric::Synflow => {
                // Replaces the activation cache that fisher reads.
                ce_grads = None;
                synflow(&mut net, cfg.param_scope, cfg.synflow_log_domain)
            }
            Metric::JacobCov => {
                ce_grads = None;
                let b = batch.expect("data metric has a batch");
                jacob_cov(&mut net, &b.inputs, cfg.jacob_eps)
            }
        };
        let entry = match result {
            Ok(v) if v.is_finite() => ScoreEntry {
                arch: arch_str.clone(),
                metric: m,
                value: Some(v),
                fingerprint: fp,
                error: None,
            },
            Ok(v) => ScoreEntry {
                arch: arch_str.clone(),
                metric: m,
                value: None,
                fingerprint: fp,
                error: Some(format!("non-finite score {v}")),
            },
            Err(e) => ScoreEntry {
                arch: arch_str.clone(),
                metric: m,
                value: None,
                fingerprint: fp,
                error: Some(e.to_string()),
            },
        };
        cache.insert(entry.clone());
        out.insert(m, entry);
    }
    Ok(out)
}
