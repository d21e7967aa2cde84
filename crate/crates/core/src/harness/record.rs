//! Result records and their append-only JSON-lines and CSV outputs.
//!
//! CSV columns, in order: `kind, seed, workers, section, name, mean,
//! standard_error, n, passed`. `section` is `estimate`, `value` or `check`;
//! cells that do not apply to a section are left empty.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::estimate::EstimateWithError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedEstimate {
    pub name: String,
    pub mean: f64,
    pub standard_error: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedValue {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Everything an experiment computes. Deterministic given the config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub estimates: Vec<NamedEstimate>,
    pub values: Vec<NamedValue>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl Outcome {
    pub fn estimate(&mut self, name: impl Into<String>, e: EstimateWithError) {
        self.estimates.push(NamedEstimate {
            name: name.into(),
            mean: e.mean,
            standard_error: e.standard_error,
            n: e.n,
        });
    }

    pub fn value(&mut self, name: impl Into<String>, value: f64) {
        self.values.push(NamedValue {
            name: name.into(),
            value,
        });
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Field-by-field differences, floats compared by bit pattern.
    pub fn differences(&self, other: &Outcome) -> Vec<String> {
        let mut out = Vec::new();
        let mut cmp = |what: &str, a: usize, b: usize| {
            if a != b {
                out.push(format!("{what}: {a} vs {b} entries"));
            }
        };
        cmp("estimates", self.estimates.len(), other.estimates.len());
        cmp("values", self.values.len(), other.values.len());
        cmp("checks", self.checks.len(), other.checks.len());
        for (a, b) in self.estimates.iter().zip(&other.estimates) {
            let same = a.name == b.name
                && a.n == b.n
                && a.mean.to_bits() == b.mean.to_bits()
                && a.standard_error.to_bits() == b.standard_error.to_bits();
            if !same {
                out.push(format!(
                    "estimate {}: {:?} vs {:?}",
                    a.name,
                    (a.mean, a.standard_error),
                    (b.mean, b.standard_error)
                ));
            }
        }
        for (a, b) in self.values.iter().zip(&other.values) {
            if a.name != b.name || a.value.to_bits() != b.value.to_bits() {
                out.push(format!("value {}: {} vs {}", a.name, a.value, b.value));
            }
        }
        for (a, b) in self.checks.iter().zip(&other.checks) {
            if a != b {
                out.push(format!("check {}: {} vs {}", a.name, a.passed, b.passed));
            }
        }
        if self.warnings != other.warnings {
            out.push("warnings differ".into());
        }
        out
    }
}

/// How a replayed record relates to its source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayInfo {
    pub source: String,
    pub source_seed: u64,
    pub source_version: String,
    pub source_workers: usize,
    /// The seed was changed, so differences are expected and not checked.
    pub comparison_only: bool,
    pub bit_identical: bool,
    pub differences: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub kind: ExperimentKind,
    pub version: String,
    pub workers: usize,
    pub config: ExperimentConfig,
    pub outcome: Outcome,
    pub passed: bool,
    pub duration_secs: f64,
    pub replay: Option<ReplayInfo>,
}

impl ResultRecord {
    /// Appends the record to `<dir>/<kind>.jsonl` and its rows to
    /// `<dir>/<kind>.csv`. Returns both paths.
    pub fn append_to(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let json = dir.join(format!("{}.jsonl", self.kind));
        let mut f = OpenOptions::new().create(true).append(true).open(&json)?;
        writeln!(f, "{}", serde_json::to_string(self)?)?;
        let csv_path = dir.join(format!("{}.csv", self.kind));
        let fresh = !csv_path.exists() || std::fs::metadata(&csv_path)?.len() == 0;
        let file = OpenOptions::new().create(true).append(true).open(&csv_path)?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if fresh {
            w.write_record([
                "kind",
                "seed",
                "workers",
                "section",
                "name",
                "mean",
                "standard_error",
                "n",
                "passed",
            ])?;
        }
        let (kind, seed, workers) = (self.kind.name(), self.config.seed.to_string(), self.workers.to_string());
        for e in &self.outcome.estimates {
            let row = [
                kind,
                &seed,
                &workers,
                "estimate",
                &e.name,
                &e.mean.to_string(),
                &e.standard_error.to_string(),
                &e.n.to_string(),
                "",
            ];
            w.write_record(row)?;
        }
        for v in &self.outcome.values {
            w.write_record([
                kind,
                &seed,
                &workers,
                "value",
                &v.name,
                &v.value.to_string(),
                "",
                "",
                "",
            ])?;
        }
        for c in &self.outcome.checks {
            w.write_record([
                kind,
                &seed,
                &workers,
                "check",
                &c.name,
                "",
                "",
                "",
                &c.passed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok((json, csv_path))
    }
}

/// Every record in a JSON-lines file, in file order.
pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    if out.is_empty() {
        return Err(Error::Config(format!("{} holds no records", path.display())));
    }
    Ok(out)
}
