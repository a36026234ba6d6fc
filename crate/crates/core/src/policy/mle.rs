use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{log_softmax, ContextKey, Objective, Policy, RowId, TokenGrad};
use crate::corpus::TokenId;
use crate::error::{Error, Result};

/// A prompt with the answer the model should (or should not) produce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub prompt: Vec<TokenId>,
    pub answer: Vec<TokenId>,
}

/// Mean per-token negative log-likelihood over a set of examples.
#[derive(Debug, Clone)]
pub struct SequenceNll {
    positions: Vec<(ContextKey, TokenId)>,
}

impl SequenceNll {
    /// `with_eos` also scores the `<eos>` decision after each answer.
    pub fn new(policy: &Policy, examples: &[Example], with_eos: bool) -> Self {
        let positions = examples
            .iter()
            .flat_map(|ex| policy.positions(&ex.prompt, &ex.answer, with_eos))
            .collect();
        Self { positions }
    }

    pub fn positions(&self) -> &[(ContextKey, TokenId)] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

impl Objective for SequenceNll {
    fn value_and_token_grads(&self, policy: &Policy) -> Result<(f64, Vec<TokenGrad>)> {
        if self.positions.is_empty() {
            return Ok((0.0, Vec::new()));
        }
        let n = self.positions.len() as f64;
        let mut cache: HashMap<&ContextKey, Vec<f64>> = HashMap::new();
        let mut total = 0.0;
        let mut grads = Vec::with_capacity(self.positions.len());
        for (ctx, tok) in &self.positions {
            let lp = cache
                .entry(ctx)
                .or_insert_with(|| log_softmax(policy.logits(ctx)));
            total -= lp[*tok as usize];
            grads.push(TokenGrad {
                context: ctx.clone(),
                token: *tok,
                weight: -1.0 / n,
            });
        }
        Ok((total / n, grads))
    }
}

/// Per-epoch mean NLL; entry 0 is before the first update.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MleReport {
    pub nll: Vec<f64>,
}

/// Maximum-likelihood training of answers (with their `<eos>`), by
/// full-batch gradient descent where each row's gradient is averaged over
/// that row's own positions.
///
/// The loss separates across rows, so the row-averaged step is plain
/// gradient descent on each row's mean cross-entropy (curvature ≤ ½). Any
/// `step ≤ 2` therefore never increases the loss, and rare contexts learn
/// as fast as frequent ones.
pub fn train_mle(
    policy: &mut Policy,
    examples: &[Example],
    epochs: usize,
    step: f64,
) -> Result<MleReport> {
    if examples.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    let objective = SequenceNll::new(policy, examples, true);
    row_normalized_descent(policy, &objective, epochs, step)
}

pub(crate) fn row_normalized_descent(
    policy: &mut Policy,
    objective: &SequenceNll,
    epochs: usize,
    step: f64,
) -> Result<MleReport> {
    policy.ensure_rows(objective.positions().iter().map(|(c, _)| c));
    let mut counts: BTreeMap<RowId, usize> = BTreeMap::new();
    for (ctx, _) in objective.positions() {
        *counts.entry(policy.row_id(ctx)).or_default() += 1;
    }
    let n = objective.len() as f64;
    let mut report = MleReport::default();
    for _ in 0..epochs {
        let (nll, mut grad) = super::loss_gradient(policy, objective)?;
        report.nll.push(nll);
        for (id, count) in &counts {
            grad.scale_row(id, -n / *count as f64);
        }
        policy.apply_update(&grad, step)?;
    }
    report.nll.push(objective.value(policy)?);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use crate::policy::{loss_gradient, softmax};

    #[test]
    fn single_token_gradient_is_softmax_minus_onehot() {
        let v = Vocabulary::build(&["a b c"]).unwrap();
        let p = Policy::new(&v, 2);
        let ex = [Example {
            prompt: vec![0],
            answer: vec![1],
        }];
        let nll = SequenceNll::new(&p, &ex, false);
        let (value, g) = loss_gradient(&p, &nll).unwrap();
        assert!((value - 6f64.ln()).abs() < 1e-12);
        let row = g.get(&RowId::Fallback).unwrap();
        let probs = softmax(p.fallback());
        for (j, (&gj, &pj)) in row.iter().zip(&probs).enumerate() {
            let onehot = if j == 1 { 1.0 } else { 0.0 };
            assert!((gj - (pj - onehot)).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_epochs_leave_params_unchanged_apart_from_row_creation() {
        let v = Vocabulary::build(&["a b c"]).unwrap();
        let mut p = Policy::new(&v, 2);
        let ex = [Example {
            prompt: vec![0],
            answer: vec![1, 2],
        }];
        let before = p.clone();
        let report = train_mle(&mut p, &ex, 0, 1.0).unwrap();
        assert_eq!(report.nll.len(), 1);
        for ctx in before.rows().keys().chain(p.rows().keys()) {
            assert_eq!(p.next_token_distribution(ctx), before.next_token_distribution(ctx));
        }
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let v = Vocabulary::build(&["a"]).unwrap();
        let mut p = Policy::new(&v, 2);
        assert!(train_mle(&mut p, &[], 3, 1.0).is_err());
    }

    #[test]
    fn memorizes_a_repeated_sentence() {
        let v = Vocabulary::build(&["the quick brown fox jumps over the lazy dog"]).unwrap();
        let sentence = v.encode("the quick brown fox jumps over the lazy dog");
        let mut p = Policy::new(&v, 2);
        let ex = vec![
            Example {
                prompt: vec![],
                answer: sentence.clone(),
            };
            5
        ];
        let report = train_mle(&mut p, &ex, 60, 1.5).unwrap();
        for w in report.nll.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
        assert_eq!(p.greedy(&[], 20), sentence);
    }
}
