//! Training traces: one JSON record per line. The first line is a header
//! `{"kind":"header","format":"purge.trace.v1",...}`; then `step` records,
//! one per update, and `leakage` records, one per measurement.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::theory::{LeakageEstimate, LeakageSeries};

pub const TRACE_FORMAT: &str = "purge.trace.v1";

/// One optimizer update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Outer iteration, starting at 1.
    pub t: usize,
    pub epoch: usize,
    /// Global update count, starting at 1.
    pub step: usize,
    pub step_size: f64,
    /// Objective value before the update.
    pub objective: f64,
    /// Mean reward of the sampled groups (unlearning by reward only).
    pub reward_mean: Option<f64>,
    /// Mean per-token KL estimate toward the reference policy.
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TraceRecord {
    Header {
        format: String,
        method: String,
        config_hash: String,
        seed: u64,
    },
    Step(StepRecord),
    Leakage {
        t: usize,
        #[serde(flatten)]
        estimate: LeakageEstimate,
    },
}

/// Append-only run record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub method: String,
    pub config_hash: String,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub leakage: LeakageSeries,
}

impl TrainTrace {
    pub fn new(method: &str, config_hash: &str, seed: u64) -> Self {
        Self {
            method: method.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            ..Default::default()
        }
    }

    pub fn records(&self) -> Vec<TraceRecord> {
        let mut out = vec![TraceRecord::Header {
            format: TRACE_FORMAT.into(),
            method: self.method.clone(),
            config_hash: self.config_hash.clone(),
            seed: self.seed,
        }];
        let mut leak = self.leakage.points.iter().peekable();
        // leakage at t is emitted before the first step of iteration t + 1
        for s in &self.steps {
            while let Some(p) = leak.next_if(|p| p.0 < s.t) {
                out.push(TraceRecord::Leakage { t: p.0, estimate: p.1 });
            }
            out.push(TraceRecord::Step(s.clone()));
        }
        for p in leak {
            out.push(TraceRecord::Leakage { t: p.0, estimate: p.1 });
        }
        out
    }

    /// Mean reward of each step, skipping steps without one.
    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().filter_map(|s| s.reward_mean).collect()
    }
}

pub fn write_trace(path: impl AsRef<Path>, trace: &TrainTrace) -> Result<()> {
    let mut out = Vec::new();
    for r in trace.records() {
        serde_json::to_writer(&mut out, &r)?;
        out.push(b'\n');
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<TrainTrace> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut trace: Option<TrainTrace> = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TraceRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("trace line {}: {e}", i + 1)))?;
        match (record, trace.as_mut()) {
            (TraceRecord::Header { format, method, config_hash, seed }, None) => {
                if format != TRACE_FORMAT {
                    return Err(Error::Format(format!("unsupported trace format {format:?}")));
                }
                trace = Some(TrainTrace::new(&method, &config_hash, seed));
            }
            (TraceRecord::Step(s), Some(t)) => t.steps.push(s),
            (TraceRecord::Leakage { t, estimate }, Some(tr)) => tr.leakage.points.push((t, estimate)),
            _ => return Err(Error::Format(format!("trace line {}: unexpected record", i + 1))),
        }
    }
    trace.ok_or_else(|| Error::Format("empty trace".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let mut trace = TrainTrace::new("purge", "abc", 9);
        trace.leakage.points.push((0, LeakageEstimate { p: 0.7, se: 0.01, n: 100 }));
        for step in 1..=4 {
            trace.steps.push(StepRecord {
                t: (step + 1) / 2,
                epoch: 0,
                step,
                step_size: 0.5,
                objective: 0.1 * step as f64,
                reward_mean: Some(0.25),
                kl: 0.0,
            });
        }
        trace.leakage.points.push((1, LeakageEstimate { p: 0.5, se: 0.01, n: 100 }));
        trace.leakage.points.push((2, LeakageEstimate { p: 0.3, se: 0.01, n: 100 }));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        write_trace(&path, &trace).unwrap();
        assert_eq!(read_trace(&path).unwrap(), trace);
        let text = std::fs::read_to_string(&path).unwrap();
        let kinds: Vec<String> = text
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["kind"].as_str().unwrap().to_string())
            .collect();
        assert_eq!(kinds, ["header", "leakage", "step", "step", "leakage", "step", "step", "leakage"]);
    }
}
