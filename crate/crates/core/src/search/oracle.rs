use std::collections::HashMap;

use crate::proxy::{self, Batch, Metric, ProxyError, ScoreCache, ScoreEntry, ScoreRequest};
use crate::space::{Architecture, SpaceSpec};

/// Source of proxy scores during a search. `None` marks a failed metric.
pub trait ProxyOracle: Sync {
    fn score(&self, arch: &Architecture) -> Result<Option<f64>, ProxyError>;
}

/// Precomputed scores keyed by canonical architecture string.
#[derive(Clone, Debug)]
pub struct TableProxy {
    space: SpaceSpec,
    values: HashMap<String, Option<f64>>,
}

impl TableProxy {
    pub fn new(space: SpaceSpec, values: impl IntoIterator<Item = (String, Option<f64>)>) -> Self {
        TableProxy {
            space,
            values: values.into_iter().collect(),
        }
    }

    /// Entries of `metric` from a score file.
    pub fn from_entries(space: SpaceSpec, entries: &[ScoreEntry], metric: Metric) -> Self {
        let values = entries
            .iter()
            .filter(|e| e.metric == metric)
            .map(|e| (e.arch.clone(), e.value));
        TableProxy::new(space, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl ProxyOracle for TableProxy {
    fn score(&self, arch: &Architecture) -> Result<Option<f64>, ProxyError> {
        let name = self.space.to_string(arch);
        self.values
            .get(&name)
            .copied()
            .ok_or_else(|| ProxyError::Cache(format!("no proxy value for `{name}`")))
    }
}

/// Scores computed on demand through the proxy module, memoized in a cache.
pub struct LiveProxy {
    pub request: ScoreRequest,
    pub metric: Metric,
    pub batch: Option<Batch>,
    pub cache: ScoreCache,
}

impl ProxyOracle for LiveProxy {
    fn score(&self, arch: &Architecture) -> Result<Option<f64>, ProxyError> {
        let out = proxy::score(arch, &self.request, &[self.metric], self.batch.as_ref(), &self.cache)?;
        Ok(out.get(&self.metric).and_then(|e| e.value))
    }
}
