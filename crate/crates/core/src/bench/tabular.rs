use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde_json::{json, Value};

use super::train::{TrainRecord, TrainStatus};
use super::BenchError;
use crate::io;
use crate::space::{Architecture, SpaceSpec};

pub const TABULAR_FORMAT: &str = "zcnas-tabular";

/// Training records per canonical architecture string.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularBenchmark {
    pub space: SpaceSpec,
    /// Free-form build description stored in the file header.
    pub meta: Value,
    records: BTreeMap<String, Vec<TrainRecord>>,
}

impl TabularBenchmark {
    pub fn new(space: SpaceSpec) -> Self {
        TabularBenchmark {
            space,
            meta: Value::Null,
            records: BTreeMap::new(),
        }
    }

    /// Adds a record, replacing any earlier record for the same seed.
    pub fn insert(&mut self, arch: &str, record: TrainRecord) -> Result<(), BenchError> {
        if record.test_acc.is_nan() || !(0.0..=1.0).contains(&record.test_acc) {
            return Err(BenchError::Format(format!("test accuracy {} outside [0, 1]", record.test_acc)));
        }
        if record.val_acc.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(BenchError::Format("validation accuracy outside [0, 1]".into()));
        }
        let list = self.records.entry(arch.to_string()).or_default();
        match list.iter_mut().find(|r| r.seed == record.seed) {
            Some(slot) => *slot = record,
            None => {
                list.push(record);
                list.sort_by_key(|r| r.seed);
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, arch: &str, seed: u64) -> bool {
        self.records.get(arch).is_some_and(|l| l.iter().any(|r| r.seed == seed))
    }

    pub fn archs(&self) -> impl Iterator<Item = &str> {
        self.records.keys().map(String::as_str)
    }

    pub fn records(&self, arch: &str) -> Option<&[TrainRecord]> {
        self.records.get(arch).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[TrainRecord])> {
        self.records.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Test accuracy of one uniformly chosen seed. Failed runs count as 0.
    pub fn query(&self, arch: &Architecture, rng: &mut impl Rng) -> Result<f64, BenchError> {
        self.query_str(&self.space.to_string(arch), rng)
    }

    pub fn query_str(&self, arch: &str, rng: &mut impl Rng) -> Result<f64, BenchError> {
        let list = self
            .records
            .get(arch)
            .filter(|l| !l.is_empty())
            .ok_or_else(|| BenchError::UnknownArch(arch.to_string()))?;
        let r = if list.len() == 1 { &list[0] } else { &list[rng.random_range(0..list.len())] };
        Ok(accuracy_of(r))
    }

    /// Mean test accuracy over seeds, failed runs counted as 0.
    pub fn mean_accuracy(&self, arch: &str) -> Option<f64> {
        let list = self.records.get(arch).filter(|l| !l.is_empty())?;
        Some(list.iter().map(accuracy_of).sum::<f64>() / list.len() as f64)
    }

    /// Mean validation accuracy at each epoch across seeds.
    pub fn mean_curve(&self, arch: &str) -> Option<Vec<f64>> {
        let list = self.records.get(arch).filter(|l| !l.is_empty())?;
        let epochs = list.iter().map(|r| r.val_acc.len()).min()?;
        Some(
            (0..epochs)
                .map(|e| list.iter().map(|r| r.val_acc[e]).sum::<f64>() / list.len() as f64)
                .collect(),
        )
    }

    pub fn render(&self) -> String {
        let lines = self
            .records
            .iter()
            .flat_map(|(arch, list)| list.iter().map(move |r| record_json(arch, r)));
        io::render_jsonl(&self.header(), lines)
    }

    fn header(&self) -> Value {
        let mut extra = json!({ "space": self.space });
        if !self.meta.is_null() {
            extra["meta"] = self.meta.clone();
        }
        io::header(TABULAR_FORMAT, extra)
    }

    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let (header, lines) = io::parse_jsonl(text, TABULAR_FORMAT).map_err(BenchError::Format)?;
        let space: SpaceSpec = serde_json::from_value(header.get("space").cloned().unwrap_or(Value::Null))
            .map_err(|e| BenchError::Format(format!("space: {e}")))?;
        let mut bench = TabularBenchmark::new(space);
        bench.meta = header.get("meta").cloned().unwrap_or(Value::Null);
        for line in &lines {
            let (arch, rec) = parse_record(line)?;
            bench.space.parse(&arch).map_err(|e| BenchError::Format(e.to_string()))?;
            bench.insert(&arch, rec)?;
        }
        Ok(bench)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), BenchError> {
        io::atomic_write(path, self.render().as_bytes())?;
        Ok(())
    }

    /// Creates `path` with just a header if it does not exist.
    pub fn init_file(&self, path: &Path) -> Result<(), BenchError> {
        if !path.exists() {
            io::atomic_write(path, io::render_jsonl(&self.header(), std::iter::empty()).as_bytes())?;
        }
        Ok(())
    }

    /// Appends one record line to an existing file.
    pub fn append(path: &Path, arch: &str, record: &TrainRecord) -> Result<(), BenchError> {
        io::append_line(path, &record_json(arch, record))?;
        Ok(())
    }
}

fn accuracy_of(r: &TrainRecord) -> f64 {
    match r.status {
        TrainStatus::Ok => r.test_acc,
        TrainStatus::Failed => 0.0,
    }
}

fn record_json(arch: &str, r: &TrainRecord) -> Value {
    let mut v = json!({
        "arch": arch,
        "seed": r.seed,
        "val_acc": r.val_acc,
        "test_acc": r.test_acc,
        "status": r.status,
    });
    if r.status == TrainStatus::Failed {
        v["epochs_completed"] = json!(r.epochs_completed);
    }
    v
}

fn parse_record(v: &Value) -> Result<(String, TrainRecord), BenchError> {
    let bad = |k: &str| BenchError::Format(format!("record field `{k}`"));
    let arch = v.get("arch").and_then(Value::as_str).ok_or_else(|| bad("arch"))?.to_string();
    let seed = v.get("seed").and_then(Value::as_u64).ok_or_else(|| bad("seed"))?;
    let val_acc: Vec<f64> =
        serde_json::from_value(v.get("val_acc").cloned().unwrap_or(Value::Null)).map_err(|_| bad("val_acc"))?;
    let test_acc = v.get("test_acc").and_then(Value::as_f64).ok_or_else(|| bad("test_acc"))?;
    let status: TrainStatus =
        serde_json::from_value(v.get("status").cloned().unwrap_or(Value::Null)).map_err(|_| bad("status"))?;
    let epochs_completed = match status {
        TrainStatus::Ok => val_acc.len(),
        TrainStatus::Failed => v
            .get("epochs_completed")
            .and_then(Value::as_u64)
            .ok_or_else(|| bad("epochs_completed"))? as usize,
    };
    Ok((
        arch,
        TrainRecord {
            seed,
            val_acc,
            test_acc,
            status,
            epochs_completed,
        },
    ))
}
