use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::TokenId;
use crate::error::{Error, Result};
use crate::matcher::PhraseAutomaton;
use crate::policy::Policy;
use crate::seed::stream_rng;

/// Anything that generates answers.
pub trait Sampler: Sync {
    fn sample_tokens(
        &self,
        prompt: &[TokenId],
        temperature: f64,
        max_len: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<TokenId>;
}

impl Sampler for Policy {
    fn sample_tokens(
        &self,
        prompt: &[TokenId],
        temperature: f64,
        max_len: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<TokenId> {
        self.sample_with(prompt, temperature, max_len, rng).tokens
    }
}

/// The whole-answer mixture `(1 − α) π_current + α π_base`.
#[derive(Debug, Clone, Copy)]
pub struct Mixture<'a> {
    pub current: &'a Policy,
    pub base: &'a Policy,
    pub alpha: f64,
}

impl Sampler for Mixture<'_> {
    fn sample_tokens(
        &self,
        prompt: &[TokenId],
        temperature: f64,
        max_len: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<TokenId> {
        let source = if rng.random::<f64>() < self.alpha { self.base } else { self.current };
        source.sample_with(prompt, temperature, max_len, rng).tokens
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakageConfig {
    pub samples: usize,
    pub max_len: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for LeakageConfig {
    fn default() -> Self {
        Self { samples: 2000, max_len: 12, temperature: 1.0, seed: 0 }
    }
}

/// A leak probability estimate with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakageEstimate {
    pub p: f64,
    pub se: f64,
    pub n: usize,
}

/// Leakage measured over training: `(t, estimate)` with `t = 0` before any update.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LeakageSeries {
    pub points: Vec<(usize, LeakageEstimate)>,
}

/// Minimum Monte Carlo sample count for a leakage estimate.
pub const MIN_LEAKAGE_SAMPLES: usize = 100;

/// Fraction of sampled answers containing a forbidden phrase.
///
/// Sample `j` answers query `j mod |queries|` using stream `j` of `cfg.seed`,
/// so the estimate does not depend on thread scheduling.
pub fn estimate_leakage(
    sampler: &dyn Sampler,
    queries: &[Vec<TokenId>],
    automaton: &PhraseAutomaton,
    cfg: &LeakageConfig,
) -> Result<LeakageEstimate> {
    if cfg.samples < MIN_LEAKAGE_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "leakage needs at least {MIN_LEAKAGE_SAMPLES} samples, got {}",
            cfg.samples
        )));
    }
    if queries.is_empty() {
        return Err(Error::InvalidInput("no queries".into()));
    }
    let leaks: usize = (0..cfg.samples)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream_rng(cfg.seed, j as u64);
            let q = &queries[j % queries.len()];
            let tokens = sampler.sample_tokens(q, cfg.temperature, cfg.max_len, &mut rng);
            usize::from(automaton.contains_forbidden(&tokens))
        })
        .sum();
    let n = cfg.samples as f64;
    let p = leaks as f64 / n;
    Ok(LeakageEstimate { p, se: (p * (1.0 - p) / n).sqrt(), n: cfg.samples })
}
