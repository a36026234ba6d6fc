//! Run configuration: one TOML file plus `--set key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use purge_core::baselines::BaselineConfig;
use purge_core::eval::EvalConfig;
use purge_core::fixture::TARGET;
use purge_core::grpo::TrainConfig;
use purge_core::pipeline::{BaseConfig, ForgetConfig};
use purge_core::seed::{derive_seed, sha256_hex};
use purge_core::theory::{CoverageConfig, RegretConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { dataset: "dataset.jsonl".into(), out_dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Monte Carlo samples for Δu and KL.
    pub samples: usize,
    /// Ceiling on the final leakage of a mixing-free run.
    pub suppression_floor: Option<f64>,
    /// Size of the base-sampled population for the coverage check.
    pub population: usize,
    pub deltas: Vec<f64>,
    pub coverage: CoverageConfig,
    /// Base-model epochs for the regret experiment's starting point.
    pub regret_base_epochs: usize,
    pub regret: RegretConfig,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            samples: 2000,
            suppression_floor: None,
            population: 6000,
            deltas: vec![0.05, 0.1],
            coverage: CoverageConfig::default(),
            regret_base_epochs: 10,
            regret: RegretConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every component seed is derived from it.
    pub seed: u64,
    pub target: String,
    pub paths: Paths,
    pub base: BaseConfig,
    pub forget: ForgetConfig,
    pub train: TrainConfig,
    pub baseline: BaselineConfig,
    pub eval: EvalConfig,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            target: TARGET.to_string(),
            paths: Paths::default(),
            base: BaseConfig::default(),
            forget: ForgetConfig::default(),
            train: TrainConfig::default(),
            baseline: BaselineConfig::default(),
            eval: EvalConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads `path` (if any), applies `key=value` overrides and derives component seeds.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut value = toml::Table::try_from(RunConfig::default())
            .map_err(|e| CliError::Config(format!("default configuration: {e}")))?;
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            let file = toml::from_str::<toml::Table>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            merge(&mut value, file);
        }
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(value)
            .try_into()
            .map_err(|e| CliError::Config(format!("{e}")))?;
        cfg.train.seed = derive_seed(cfg.seed, "train");
        cfg.baseline.seed = derive_seed(cfg.seed, "baseline");
        cfg.eval.seed = derive_seed(cfg.seed, "eval");
        cfg.verify.coverage.seed = derive_seed(cfg.seed, "coverage");
        cfg.verify.regret.train.seed = derive_seed(cfg.seed, "regret");
        cfg.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        cfg.baseline.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// SHA-256 of the resolved configuration, paths excluded.
    pub fn hash(&self) -> String {
        let mut view = self.clone();
        view.paths = Paths::default();
        sha256_hex(&serde_json::to_vec(&view).expect("config serializes"))
    }

    /// SHA-256 of the settings that determine trained artifacts: paths,
    /// evaluation and verification settings excluded.
    pub fn pipeline_hash(&self) -> String {
        let mut view = self.clone();
        view.paths = Paths::default();
        view.eval = EvalConfig::default();
        view.verify = VerifyConfig::default();
        sha256_hex(&serde_json::to_vec(&view).expect("config serializes"))
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.paths.out_dir.join(name)
    }
}

/// Overlays `top` onto `base`, descending into tables present in both.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override {key:?}: {p:?} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
