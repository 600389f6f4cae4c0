use std::collections::BTreeMap;
use std::path::Path;

use phasegen_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Bumped whenever a field changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

/// Every number in a report is a stand-in measured on the synthetic corpus,
/// never comparable with benchmark scores from real motion datasets.
pub const PROXY: &str = "PROXY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub os: String,
    pub arch: String,
    pub cpus: usize,
    pub code_version: String,
    pub optimized: bool,
}

impl Fingerprint {
    pub fn current() -> Self {
        Fingerprint {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            optimized: !cfg!(debug_assertions),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub label: String,
    pub values: BTreeMap<String, f64>,
}

impl Row {
    pub fn new(label: impl Into<String>) -> Self {
        Row {
            label: label.into(),
            values: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, v: f64) -> Self {
        self.values.insert(key.to_string(), v);
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub experiment: String,
    pub metric_kind: String,
    pub seed: u64,
    /// Seed of the corpus the models were trained and scored on, if known.
    pub corpus_seed: Option<u64>,
    pub config: serde_json::Value,
    pub metrics: BTreeMap<String, f64>,
    pub curves: BTreeMap<String, Vec<f64>>,
    pub rows: Vec<Row>,
    pub notes: Vec<String>,
    pub environment: Fingerprint,
}

impl MetricReport {
    pub fn new(experiment: &str, seed: u64, config: &impl Serialize) -> Self {
        MetricReport {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.to_string(),
            metric_kind: PROXY.to_string(),
            seed,
            corpus_seed: None,
            config: serde_json::to_value(config).expect("config serializes"),
            metrics: BTreeMap::new(),
            curves: BTreeMap::new(),
            rows: Vec::new(),
            notes: Vec::new(),
            environment: Fingerprint::current(),
        }
    }

    pub fn metric(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied()
    }

    pub fn set(&mut self, key: &str, v: f64) {
        self.metrics.insert(key.to_string(), v);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse {
            path: "<report>".into(),
            message: e.to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(Error::io(path))
    }

    /// A warning when two reports were measured on different corpora.
    pub fn comparison_warning(&self, other: &MetricReport) -> Option<String> {
        (self.corpus_seed != other.corpus_seed).then(|| {
            format!(
                "reports {:?} and {:?} use different corpus seeds ({:?} vs {:?})",
                self.experiment, other.experiment, self.corpus_seed, other.corpus_seed
            )
        })
    }
}

/// A list of reports as written by the CLI.
pub fn write_reports(reports: &[MetricReport], path: &Path) -> Result<()> {
    let s = serde_json::to_string_pretty(reports).expect("reports serialize");
    std::fs::write(path, s).map_err(Error::io(path))
}
