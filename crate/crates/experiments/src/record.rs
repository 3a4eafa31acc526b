//! Run records and their on-disk form.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::{Algorithm, ExperimentConfig, ExperimentId, PolicyKind};

pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One independent run within an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunUnit {
    /// Position in the experiment plan.
    pub index: usize,
    pub algorithm: Algorithm,
    /// Particle count; 1 for single-chain baselines.
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Dataset variant, e.g. `D3` or `beta=100`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setting: Option<String>,
    pub dataset: usize,
    pub rerun: usize,
}

impl RunUnit {
    /// Label grouping runs that differ only in dataset and rerun.
    pub fn group(&self) -> String {
        let mut label = self.algorithm.to_string();
        if let Some(p) = self.policy {
            label.push_str(&format!("-{p}"));
        }
        if let Some(t) = self.threshold {
            label.push_str(&format!("@{t}"));
        }
        label
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: String,
    pub experiment: ExperimentId,
    /// Resolved configuration the run was executed from.
    pub config: ExperimentConfig,
    pub unit: RunUnit,
    pub seed: u64,
    pub data_stream: u64,
    pub run_stream: u64,
    /// Order in which the data points were processed.
    pub data_order: Vec<usize>,
    /// Variational bound (or evidence estimate) per iteration.
    pub bound_trace: Vec<f64>,
    /// Headline metric per iteration, where the algorithm iterates.
    pub metric_trace: Vec<f64>,
    pub metrics: BTreeMap<String, f64>,
    /// Highest-weight assignment, in processing order.
    pub assignment: Vec<usize>,
    pub elapsed_ms: f64,
}

impl RunRecord {
    /// Equality of everything except timing.
    pub fn same_result(&self, other: &RunRecord) -> bool {
        let strip = |r: &RunRecord| {
            let mut r = r.clone();
            r.elapsed_ms = 0.0;
            serde_json::to_string(&r).expect("record serializes")
        };
        strip(self) == strip(other)
    }
}

/// Writes `contents` to `path` through a temp file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn write_jsonl(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<RunRecord>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    BufReader::new(file)
        .lines()
        .enumerate()
        .filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|(i, line)| {
            let line = line?;
            serde_json::from_str(&line).with_context(|| format!("{}: line {}", path.display(), i + 1))
        })
        .collect()
}

/// One row per (run, metric).
pub fn write_runs_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["experiment", "group", "k", "setting", "dataset", "rerun", "seed", "metric", "value"])?;
    for r in records {
        for (name, value) in &r.metrics {
            w.write_record([
                r.experiment.name(),
                &r.unit.group(),
                &r.unit.k.to_string(),
                r.unit.setting.as_deref().unwrap_or(""),
                &r.unit.dataset.to_string(),
                &r.unit.rerun.to_string(),
                &r.seed.to_string(),
                name,
                &value.to_string(),
            ])?;
        }
    }
    write_atomic(path, &w.into_inner()?)
}
