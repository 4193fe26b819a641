//! Persisted run records and per-step metric tables.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::KlReport;
use crate::engine::BoostTrace;
use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One hard assertion and whether it held.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    /// `ln Π Z` over the round's steps.
    pub log_z_product: f64,
    pub meets_z_product: bool,
    pub accepted_steps: usize,
    /// Largest `|residual|` over the round's split points.
    pub max_abs_residual: f64,
    /// Trichotomy label of the last split point.
    pub label: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load_ms: f64,
    pub run_ms: f64,
    pub analysis_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub code_version: String,
    /// SHA-256 over the code version, the config echo and the dataset bytes.
    pub input_hash: String,
    pub mode: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub rounds: Vec<RoundMetrics>,
    pub min_margin: Option<f64>,
    pub weak_calls: u64,
    pub timings: Timings,
    /// Mode-specific results.
    pub results: serde_json::Value,
    pub verdicts: Vec<Verdict>,
    /// Set when the run stopped before finishing.
    pub incomplete: bool,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn passed(&self) -> bool {
        !self.incomplete && self.verdicts.iter().all(|v| v.passed)
    }

    /// Appends the record as one JSON line.
    pub fn append_to(&self, path: &Path) -> Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        let mut line = serde_json::to_string(self)?;
        line.push('\n');
        f.write_all(line.as_bytes())?;
        Ok(())
    }
}

/// Lowercase hex SHA-256 of the code version, config and dataset bytes.
pub fn input_hash(config: &serde_json::Value, dataset: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(CODE_VERSION.as_bytes());
    h.update([0u8]);
    h.update(config.to_string().as_bytes());
    h.update([0u8]);
    h.update(dataset);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub step: usize,
    pub round: usize,
    pub alpha: f64,
    #[serde(rename = "Z")]
    pub z: f64,
    pub kl_to_round_start: f64,
    pub trichotomy_label: String,
    pub pool_best_advantage: f64,
}

/// One row per boosting step; KL and label refer to the distribution after
/// the step, relative to the start of its round.
pub fn metric_rows(trace: &BoostTrace, report: &KlReport) -> Vec<MetricRow> {
    let r = trace.params.steps_per_round;
    trace
        .steps
        .iter()
        .map(|s| {
            let split = report.after_step(s.step, r);
            MetricRow {
                step: s.step,
                round: s.round,
                alpha: s.alpha,
                z: s.z,
                kl_to_round_start: split.map_or(f64::NAN, |p| p.kl),
                trichotomy_label: split.map_or_else(String::new, |p| p.label.as_str().to_string()),
                pool_best_advantage: s.pool_best_advantage,
            }
        })
        .collect()
}

/// The metric table as CSV text; floats print in shortest round-trip form.
pub fn metrics_csv(rows: &[MetricRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record([
            "step",
            "round",
            "alpha",
            "Z",
            "kl_to_round_start",
            "trichotomy_label",
            "pool_best_advantage",
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| crate::error::Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn round_metrics(trace: &BoostTrace, report: &KlReport) -> Vec<RoundMetrics> {
    let g = trace.params.gamma;
    let r = trace.params.steps_per_round;
    trace
        .round_log_z_products()
        .into_iter()
        .zip(&report.rounds)
        .enumerate()
        .map(|(k, (lz, diag))| RoundMetrics {
            round: k,
            log_z_product: lz,
            meets_z_product: lz < -g * g * r as f64 / 2.0,
            accepted_steps: trace.round_steps(k).iter().filter(|s| s.accepted).count(),
            max_abs_residual: diag.splits.iter().map(|s| s.residual.abs()).fold(0.0, f64::max),
            label: diag.splits.last().map_or_else(String::new, |s| s.label.as_str().to_string()),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let cfg = serde_json::json!({"seed": 1});
        let a = input_hash(&cfg, b"data");
        assert_eq!(a.len(), 64);
        assert_eq!(a, input_hash(&cfg, b"data"));
        assert_ne!(a, input_hash(&cfg, b"datb"));
        assert_ne!(a, input_hash(&serde_json::json!({"seed": 2}), b"data"));
    }

    #[test]
    fn empty_table_has_header() {
        let text = metrics_csv(&[]).unwrap();
        assert!(text.starts_with("step,round,alpha,Z,"));
    }

    #[test]
    fn records_append_as_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.jsonl");
        let rec = RunRecord {
            schema_version: SCHEMA_VERSION,
            code_version: CODE_VERSION.into(),
            input_hash: String::new(),
            mode: "verify".into(),
            seed: 0,
            config: serde_json::Value::Null,
            rounds: Vec::new(),
            min_margin: None,
            weak_calls: 0,
            timings: Timings::default(),
            results: serde_json::Value::Null,
            verdicts: vec![Verdict::new("x", true, "")],
            incomplete: false,
            error: None,
        };
        rec.append_to(&path).unwrap();
        rec.append_to(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back: RunRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(back, rec);
        assert!(back.passed());
    }
}
