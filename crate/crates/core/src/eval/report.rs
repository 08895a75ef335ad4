use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean and population standard deviation; `(NaN, NaN)` for no values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
}

impl From<(f64, f64)> for MetricSummary {
    fn from((mean, std): (f64, f64)) -> Self {
        Self { mean, std }
    }
}

/// Metric values of one run with the metadata needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub dataset: String,
    pub latent_dim: usize,
    pub seed: u64,
    /// Method-specific setting such as `gamma=10` or the training configuration.
    pub detail: String,
    pub metrics: BTreeMap<String, MetricSummary>,
    /// Fully resolved configuration of the run.
    #[serde(default)]
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn new(method: &str, dataset: &str, latent_dim: usize, seed: u64) -> Self {
        Self {
            method: method.to_string(),
            dataset: dataset.to_string(),
            latent_dim,
            seed,
            detail: String::new(),
            metrics: BTreeMap::new(),
            config: serde_json::Value::Null,
        }
    }

    pub fn insert(&mut self, metric: &str, value: impl Into<MetricSummary>) {
        self.metrics.insert(metric.to_string(), value.into());
    }

    pub fn get(&self, metric: &str) -> Option<MetricSummary> {
        self.metrics.get(metric).copied()
    }

    /// Checks the ranges of the known metrics.
    pub fn validate(&self) -> Result<()> {
        for (name, m) in &self.metrics {
            let (lo, hi) = match name.as_str() {
                "ari" | "ari2" => (-1.0, 1.0),
                "accuracy" | "precision" | "recall" | "mrr" => (0.0, 1.0),
                _ => continue,
            };
            if !(m.mean >= lo - 1e-12 && m.mean <= hi + 1e-12) {
                return Err(Error::Numerical(format!("{name} = {} outside [{lo}, {hi}]", m.mean)));
            }
        }
        Ok(())
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "method {}  dataset {}  d {}  seed {}{}\n",
            self.method,
            self.dataset,
            self.latent_dim,
            self.seed,
            if self.detail.is_empty() { String::new() } else { format!("  ({})", self.detail) }
        );
        let _ = writeln!(out, "{:<12} {:>10} {:>10}", "metric", "mean", "std");
        for (name, m) in &self.metrics {
            let _ = writeln!(out, "{:<12} {:>10.4} {:>10.4}", name, m.mean, m.std);
        }
        out
    }

    /// Tab-separated records, one metric per row, preceded by a comment line
    /// holding the resolved configuration as JSON.
    pub fn to_records(&self) -> String {
        let mut out = format!("# config {}\n", self.config);
        out.push_str("method\tdataset\tmetric\tmean\tstd\tseed\n");
        for (name, m) in &self.metrics {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                self.method, self.dataset, name, m.mean, m.std, self.seed
            );
        }
        out
    }

    pub fn write(&self, table: &Path, records: &Path) -> Result<()> {
        std::fs::write(table, self.to_table())?;
        std::fs::write(records, self.to_records())?;
        Ok(())
    }
}
