use std::collections::BTreeMap;

use super::{softmax, ContextKey, Policy, RowId};
use crate::corpus::TokenId;
use crate::error::{Error, Result};

/// Sensitivity of an objective to one scored log-probability:
/// `weight = ∂objective / ∂ log π(token | context)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrad {
    pub context: ContextKey,
    pub token: TokenId,
    pub weight: f64,
}

/// Any scalar function of the policy's log-probabilities.
///
/// Implementors report the value and the per-position weights; the chain
/// rule through the softmax is shared in [`loss_gradient`].
pub trait Objective {
    fn value_and_token_grads(&self, policy: &Policy) -> Result<(f64, Vec<TokenGrad>)>;

    fn value(&self, policy: &Policy) -> Result<f64> {
        Ok(self.value_and_token_grads(policy)?.0)
    }
}

/// Sparse gradient over parameter rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradient {
    rows: BTreeMap<RowId, Vec<f64>>,
}

impl Gradient {
    pub fn rows(&self) -> &BTreeMap<RowId, Vec<f64>> {
        &self.rows
    }

    pub fn get(&self, id: &RowId) -> Option<&[f64]> {
        self.rows.get(id).map(Vec::as_slice)
    }

    pub fn add_row(&mut self, id: RowId, values: &[f64]) {
        match self.rows.get_mut(&id) {
            Some(row) => row.iter_mut().zip(values).for_each(|(a, b)| *a += b),
            None => {
                self.rows.insert(id, values.to_vec());
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.rows.values_mut().flatten().for_each(|x| *x *= factor);
    }

    pub fn scale_row(&mut self, id: &RowId, factor: f64) {
        if let Some(row) = self.rows.get_mut(id) {
            row.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn merge(&mut self, other: &Gradient) {
        for (id, row) in &other.rows {
            self.add_row(id.clone(), row);
        }
    }

    pub fn dot(&self, other: &Gradient) -> f64 {
        self.rows
            .iter()
            .filter_map(|(id, a)| {
                other
                    .rows
                    .get(id)
                    .map(|b| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            })
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.rows.values().flatten().all(|&x| x == 0.0)
    }
}

/// Analytic gradient of `objective` with respect to every touched logit.
///
/// `∂ log π(t | c) / ∂ logit_c[j] = 1[j = t] − π(j | c)`, accumulated per row
/// so each row's softmax is evaluated once.
pub fn loss_gradient(policy: &Policy, objective: &dyn Objective) -> Result<(f64, Gradient)> {
    let (value, token_grads) = objective.value_and_token_grads(policy)?;
    Ok((value, gradient_from_token_grads(policy, token_grads)?))
}

/// Pushes per-position weights through the softmax into logit gradients.
pub fn gradient_from_token_grads(policy: &Policy, token_grads: Vec<TokenGrad>) -> Result<Gradient> {
    let vocab = policy.vocab_size();
    let mut acc: BTreeMap<RowId, (Vec<f64>, f64)> = BTreeMap::new();
    for tg in token_grads {
        let id = policy.row_id(&tg.context);
        let entry = acc.entry(id).or_insert_with(|| (vec![0.0; vocab], 0.0));
        entry.0[tg.token as usize] += tg.weight;
        entry.1 += tg.weight;
    }
    let mut gradient = Gradient::default();
    for (id, (mut onehot, total)) in acc {
        let probs = softmax(policy.row(&id));
        for (g, p) in onehot.iter_mut().zip(&probs) {
            *g -= total * p;
        }
        if onehot.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalBlowUp(id.label()));
        }
        gradient.rows.insert(id, onehot);
    }
    Ok(gradient)
}
