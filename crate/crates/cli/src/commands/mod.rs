pub mod bench;
pub mod report;
pub mod score;
pub mod search;

use zcnas::proxy::{Batch, Metric};

use crate::{CliError, Config};

/// `all` or a comma-separated metric list.
pub fn metrics(spec: &str) -> Result<Vec<Metric>, CliError> {
    if spec == "all" {
        return Ok(Metric::ALL.to_vec());
    }
    spec.split(',')
        .map(|m| m.trim().parse().map_err(|e: zcnas::proxy::ProxyError| CliError::Config(e.to_string())))
        .collect()
}

/// The real minibatch for proxy scoring, when the data mode needs one.
pub fn proxy_batch(cfg: &Config, metrics: &[Metric]) -> Result<Option<Batch>, CliError> {
    if cfg.proxy.data_mode != zcnas::proxy::DataMode::RealBatch || !metrics.iter().any(|m| m.uses_data()) {
        return Ok(None);
    }
    let data = cfg.minibench().dataset()?;
    Ok(Some(data.train.sample_batch(cfg.proxy.batch_size, cfg.proxy.seed)))
}

pub fn config_value(cfg: &Config) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}
