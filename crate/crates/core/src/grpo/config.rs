use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::sha256_hex;

/// How the step size evolves with the global update count `t ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    /// `η_t = η`.
    #[default]
    Constant,
    /// `η_t = η / √t`.
    InvSqrt,
}

impl StepSchedule {
    pub fn step_size(self, base: f64, t: usize) -> f64 {
        match self {
            StepSchedule::Constant => base,
            StepSchedule::InvSqrt => base / (t.max(1) as f64).sqrt(),
        }
    }
}

/// Hyperparameters of one unlearning run, held fixed for its duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Group size `W`.
    pub group_size: usize,
    /// Outer iterations `T`; the reference policy is refreshed at the start of each.
    pub iterations: usize,
    pub epochs: usize,
    /// Ascent steps per sampled batch.
    pub inner_updates: usize,
    /// Base step size `η`.
    pub step_size: f64,
    pub schedule: StepSchedule,
    pub clip_epsilon: f64,
    pub adv_epsilon: f64,
    pub kl_beta: f64,
    /// Probability `α` of drawing a whole answer from the frozen base policy.
    pub mix_alpha: f64,
    /// Queries per batch; all queries form one batch when there are no more than this.
    pub batch_size: usize,
    pub max_len: usize,
    pub temperature: f64,
    /// Weight of the retain-set log-likelihood added to the surrogate (0 disables it).
    pub retain_weight: f64,
    /// Samples per leakage measurement; 0 skips measurement.
    pub leakage_samples: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            iterations: 10,
            epochs: 4,
            inner_updates: 4,
            step_size: 0.5,
            schedule: StepSchedule::Constant,
            clip_epsilon: 0.2,
            adv_epsilon: 1e-8,
            kl_beta: 0.04,
            mix_alpha: 0.0,
            batch_size: 2,
            max_len: 12,
            temperature: 1.0,
            retain_weight: 0.0,
            leakage_samples: 2000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.group_size < 2 {
            return bad(format!("group size must be at least 2, got {}", self.group_size));
        }
        if self.iterations < 1 {
            return bad("at least one outer iteration is required".into());
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad(format!("clip epsilon must lie in (0, 1), got {}", self.clip_epsilon));
        }
        if !(self.kl_beta > 0.0) {
            return bad(format!("KL weight must be positive, got {}", self.kl_beta));
        }
        if !(0.0..=1.0).contains(&self.mix_alpha) {
            return bad(format!("mixing alpha must lie in [0, 1], got {}", self.mix_alpha));
        }
        if !(self.step_size > 0.0) {
            return bad(format!("step size must be positive, got {}", self.step_size));
        }
        if !(self.adv_epsilon > 0.0) {
            return bad("advantage epsilon must be positive".into());
        }
        if self.batch_size == 0 || self.max_len == 0 {
            return bad("batch size and max length must be positive".into());
        }
        if !(self.temperature > 0.0) {
            return bad("temperature must be positive".into());
        }
        if !(self.retain_weight >= 0.0) {
            return bad("retain weight must be non-negative".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}
