use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, RankedTable};
use crate::engine::{BiasMode, InitScheme};
use crate::proxy::{score, Batch, Metric, ProxyError, ScoreCache, ScoreRequest};
use crate::space::Architecture;

/// Values to sweep, one axis at a time, around a base request.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepAxes {
    pub seeds: Vec<u64>,
    pub inits: Vec<(InitScheme, BiasMode)>,
    pub batch_sizes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub rho: Option<f64>,
    pub excluded: usize,
}

/// One setting of one axis with its per-metric correlation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub cells: BTreeMap<Metric, SweepCell>,
}

/// Spearman ρ between each metric and `accuracy` for every setting of
/// each axis. `batch_for` supplies the real minibatch for a request (it
/// reads the batch size and seed from it) and may return `None` for the
/// synthetic data modes.
pub fn sensitivity_sweep(
    archs: &[Architecture],
    accuracy: &[f64],
    base: &ScoreRequest,
    axes: &SweepAxes,
    metrics: &[Metric],
    batch_for: &dyn Fn(&ScoreRequest) -> Option<Batch>,
    cache: &ScoreCache,
) -> Result<Vec<SweepRow>, ProxyError> {
    if archs.len() != accuracy.len() {
        return Err(ProxyError::InvalidConfig(
            AnalysisError::LengthMismatch(archs.len(), accuracy.len()).to_string(),
        ));
    }
    let mut settings: Vec<(String, String, ScoreRequest)> = Vec::new();
    for &seed in &axes.seeds {
        let mut r = base.clone();
        r.init.seed = seed;
        r.proxy.seed = seed;
        settings.push(("seed".into(), seed.to_string(), r));
    }
    for &(scheme, bias) in &axes.inits {
        let mut r = base.clone();
        r.init.scheme = scheme;
        r.init.bias_mode = bias;
        let label = serde_json::to_value((scheme, bias)).expect("init serializes");
        settings.push(("init".into(), format!("{}/{}", label[0].as_str().unwrap_or(""), label[1].as_str().unwrap_or("")), r));
    }
    for &b in &axes.batch_sizes {
        let mut r = base.clone();
        r.proxy.batch_size = b;
        settings.push(("batch_size".into(), b.to_string(), r));
    }

    let names: Vec<String> = archs.iter().map(|a| base.space.to_string(a)).collect();
    let mut rows = Vec::with_capacity(settings.len());
    for (axis, value, req) in settings {
        let batch = batch_for(&req);
        let mut values: BTreeMap<Metric, Vec<Option<f64>>> = BTreeMap::new();
        for arch in archs {
            let entries = score(arch, &req, metrics, batch.as_ref(), cache)?;
            for &m in metrics {
                values.entry(m).or_default().push(entries[&m].value);
            }
        }
        let cells = values
            .into_iter()
            .map(|(m, proxy)| {
                let table = RankedTable::new(names.clone(), proxy, accuracy.to_vec())
                    .expect("columns share one length");
                let cell = SweepCell {
                    rho: table.spearman().ok(),
                    excluded: table.excluded(),
                };
                (m, cell)
            })
            .collect();
        rows.push(SweepRow { axis, value, cells });
    }
    Ok(rows)
}
