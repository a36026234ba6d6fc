//! The order-k logit-table policy: one length-V logit row per observed
//! context of the last `k` token ids, plus a shared learnable fallback row
//! for every context without a row of its own.
//!
//! A completion is conditioned on the prompt: the context of the i-th answer
//! token is the last `k` ids of `prompt ++ answer[..i]`, left-padded with
//! `<bos>`. Probabilities are exact softmaxes, so every log-likelihood and
//! gradient in the lab is closed form.

mod checkpoint;
mod gradient;
mod mle;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, Vocabulary};
use crate::error::{Error, Result};

pub use checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_FORMAT, CHECKPOINT_MAGIC};
pub use gradient::{gradient_from_token_grads, loss_gradient, Gradient, Objective, TokenGrad};
pub use mle::{train_mle, Example, MleReport, SequenceNll};

/// The last `k` token ids before a prediction, `<bos>`-padded on the left.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ContextKey(Box<[TokenId]>);

impl ContextKey {
    pub fn new(ids: Vec<TokenId>) -> Self {
        Self(ids.into_boxed_slice())
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.0
    }
}

/// Which parameter row a context reads from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RowId {
    Context(ContextKey),
    Fallback,
}

/// Policy parameters θ.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    order: usize,
    vocab_size: usize,
    bos: TokenId,
    eos: TokenId,
    rows: BTreeMap<ContextKey, Vec<f64>>,
    fallback: Vec<f64>,
}

/// Sampling controls. Temperature only reshapes the sampling distribution;
/// recorded log-probabilities are always those of the untempered policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub temperature: f64,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            max_len: 12,
            seed: 0,
        }
    }
}

/// A sampled answer. `<eos>` is never part of `tokens`; `terminated`
/// records whether sampling stopped on it rather than at `max_len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub prompt: Vec<TokenId>,
    pub tokens: Vec<TokenId>,
    pub logprobs: Vec<f64>,
    pub terminated: bool,
    pub seed: u64,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&x| x - lse).collect()
}

/// Inverse-CDF draw from a normalized probability vector.
pub(crate) fn draw(probs: &[f64], rng: &mut impl Rng) -> TokenId {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i as TokenId;
        }
    }
    last_positive as TokenId
}

impl Policy {
    /// A policy with no context rows and an all-zero fallback (uniform everywhere).
    pub fn new(vocab: &Vocabulary, order: usize) -> Self {
        assert!(order >= 1, "context order must be at least 1");
        Self {
            order,
            vocab_size: vocab.len(),
            bos: vocab.bos(),
            eos: vocab.eos(),
            rows: BTreeMap::new(),
            fallback: vec![0.0; vocab.len()],
        }
    }

    /// A policy with this one's shape and no learned parameters.
    pub fn empty_like(&self) -> Self {
        Self {
            order: self.order,
            vocab_size: self.vocab_size,
            bos: self.bos,
            eos: self.eos,
            rows: BTreeMap::new(),
            fallback: vec![0.0; self.vocab_size],
        }
    }

    pub(crate) fn from_parts(
        order: usize,
        vocab: &Vocabulary,
        rows: BTreeMap<ContextKey, Vec<f64>>,
        fallback: Vec<f64>,
    ) -> Self {
        Self {
            order,
            vocab_size: vocab.len(),
            bos: vocab.bos(),
            eos: vocab.eos(),
            rows,
            fallback,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn bos(&self) -> TokenId {
        self.bos
    }

    pub fn rows(&self) -> &BTreeMap<ContextKey, Vec<f64>> {
        &self.rows
    }

    pub fn fallback(&self) -> &[f64] {
        &self.fallback
    }

    pub fn fallback_mut(&mut self) -> &mut [f64] {
        &mut self.fallback
    }

    /// Mutable access to an existing context row.
    pub fn row_mut(&mut self, key: &ContextKey) -> Option<&mut Vec<f64>> {
        self.rows.get_mut(key)
    }

    /// Context for predicting the token after `prompt ++ generated`.
    pub fn context(&self, prompt: &[TokenId], generated: &[TokenId]) -> ContextKey {
        let mut ids = vec![self.bos; self.order];
        let history = prompt.iter().chain(generated.iter()).copied();
        let len = prompt.len() + generated.len();
        let skip = len.saturating_sub(self.order);
        let start = self.order - (len - skip);
        for (slot, id) in ids[start..].iter_mut().zip(history.skip(skip)) {
            *slot = id;
        }
        ContextKey::new(ids)
    }

    /// Contexts and targets of every scored position of `answer` after `prompt`,
    /// optionally followed by the `<eos>` decision.
    pub fn positions(
        &self,
        prompt: &[TokenId],
        answer: &[TokenId],
        with_eos: bool,
    ) -> Vec<(ContextKey, TokenId)> {
        let mut out: Vec<(ContextKey, TokenId)> = answer
            .iter()
            .enumerate()
            .map(|(i, &tok)| (self.context(prompt, &answer[..i]), tok))
            .collect();
        if with_eos {
            out.push((self.context(prompt, answer), self.eos));
        }
        out
    }

    pub fn row_id(&self, context: &ContextKey) -> RowId {
        if self.rows.contains_key(context) {
            RowId::Context(context.clone())
        } else {
            RowId::Fallback
        }
    }

    pub fn row(&self, id: &RowId) -> &[f64] {
        match id {
            RowId::Context(key) => &self.rows[key],
            RowId::Fallback => &self.fallback,
        }
    }

    /// The logit row that `context` reads, falling back when unseen.
    pub fn logits(&self, context: &ContextKey) -> &[f64] {
        self.rows.get(context).unwrap_or(&self.fallback)
    }

    /// Inserts rows for unseen contexts, each initialized to a copy of the
    /// fallback row so the distribution the policy defines is unchanged.
    pub fn ensure_rows<'a>(&mut self, contexts: impl IntoIterator<Item = &'a ContextKey>) {
        for ctx in contexts {
            if !self.rows.contains_key(ctx) {
                self.rows.insert(ctx.clone(), self.fallback.clone());
            }
        }
    }

    /// π_θ(· | context).
    pub fn next_token_distribution(&self, context: &ContextKey) -> Vec<f64> {
        softmax(self.logits(context))
    }

    pub fn next_token_log_distribution(&self, context: &ContextKey) -> Vec<f64> {
        log_softmax(self.logits(context))
    }

    pub fn token_logprob(&self, context: &ContextKey, token: TokenId) -> f64 {
        log_softmax(self.logits(context))[token as usize]
    }

    /// Per-token log-probabilities of `tokens` as an answer to `prompt`.
    pub fn log_prob(&self, prompt: &[TokenId], tokens: &[TokenId]) -> Vec<f64> {
        (0..tokens.len())
            .map(|i| self.token_logprob(&self.context(prompt, &tokens[..i]), tokens[i]))
            .collect()
    }

    /// Log-probability of the full answer including its `<eos>` decision
    /// (omitted when the answer was truncated at `max_len`).
    pub fn sequence_logprob(&self, prompt: &[TokenId], tokens: &[TokenId], terminated: bool) -> f64 {
        self.positions(prompt, tokens, terminated)
            .iter()
            .map(|(ctx, tok)| self.token_logprob(ctx, *tok))
            .sum()
    }

    pub fn sample_completion(&self, prompt: &[TokenId], cfg: &SampleConfig) -> Completion {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut c = self.sample_with(prompt, cfg.temperature, cfg.max_len, &mut rng);
        c.seed = cfg.seed;
        c
    }

    /// Samples an answer with a caller-owned generator.
    pub fn sample_with(
        &self,
        prompt: &[TokenId],
        temperature: f64,
        max_len: usize,
        rng: &mut impl Rng,
    ) -> Completion {
        let mut tokens = Vec::new();
        let mut logprobs = Vec::new();
        let mut terminated = false;
        while tokens.len() < max_len {
            let ctx = self.context(prompt, &tokens);
            let logits = self.logits(&ctx);
            let probs = if temperature == 1.0 {
                softmax(logits)
            } else {
                softmax(&logits.iter().map(|x| x / temperature).collect::<Vec<_>>())
            };
            let tok = draw(&probs, rng);
            if tok == self.eos {
                terminated = true;
                break;
            }
            logprobs.push(log_softmax(logits)[tok as usize]);
            tokens.push(tok);
        }
        Completion {
            prompt: prompt.to_vec(),
            tokens,
            logprobs,
            terminated,
            seed: 0,
        }
    }

    /// Argmax decoding; ties go to the lowest id.
    pub fn greedy(&self, prompt: &[TokenId], max_len: usize) -> Vec<TokenId> {
        let mut tokens = Vec::new();
        while tokens.len() < max_len {
            let logits = self.logits(&self.context(prompt, &tokens));
            let mut best = 0;
            for (i, &x) in logits.iter().enumerate() {
                if x > logits[best] {
                    best = i;
                }
            }
            if best as TokenId == self.eos {
                break;
            }
            tokens.push(best as TokenId);
        }
        tokens
    }

    /// θ ← θ + η·g, applied only when every resulting parameter is finite.
    pub fn apply_update(&mut self, gradient: &Gradient, step_size: f64) -> Result<()> {
        if !(step_size > 0.0) {
            return Err(Error::InvalidInput(format!(
                "step size must be positive, got {step_size}"
            )));
        }
        let mut staged = Vec::with_capacity(gradient.rows().len());
        for (id, g) in gradient.rows() {
            let current = self.row(id);
            let next: Vec<f64> = current.iter().zip(g).map(|(x, d)| x + step_size * d).collect();
            if next.iter().any(|x| !x.is_finite()) {
                return Err(Error::NumericalBlowUp(id.label()));
            }
            staged.push((id, next));
        }
        for (id, next) in staged {
            match id {
                RowId::Context(key) => {
                    if let Some(row) = self.rows.get_mut(key) {
                        *row = next;
                    } else {
                        self.rows.insert(key.clone(), next);
                    }
                }
                RowId::Fallback => self.fallback = next,
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.fallback.iter().all(|x| x.is_finite())
            && self.rows.values().flatten().all(|x| x.is_finite())
    }
}

impl RowId {
    pub fn label(&self) -> crate::error::RowLabel {
        match self {
            RowId::Context(key) => crate::error::RowLabel::Context(key.clone()),
            RowId::Fallback => crate::error::RowLabel::Fallback,
        }
    }
}
