use std::collections::HashMap;

use super::{kl_estimate, GroupSample};
use crate::error::{Error, Result};
use crate::policy::{ContextKey, Objective, Policy, SequenceNll, TokenGrad};

/// Smallest old-policy probability used in a ratio denominator.
const OLD_PROB_FLOOR: f64 = 1e-30;

/// The clipped group-relative surrogate with a KL penalty, to be maximized:
///
/// ```text
/// J = mean over groups of (1/W) Σ_w (1/|ŷ_w|) Σ_i [ min(Π A_w, clip(Π, 1−ε, 1+ε) A_w) − β k3_i ]
///     − λ · NLL_retain
/// ```
///
/// with `Π = π_cur(ŷ_i | ·) / π_old(ŷ_i | ·)` and `k3_i` the single-sample KL
/// estimate toward the reference policy. Empty answers contribute nothing.
pub struct SurrogateObjective<'a> {
    pub groups: &'a [GroupSample],
    pub reference: &'a Policy,
    pub clip_epsilon: f64,
    pub kl_beta: f64,
    /// Optional retain-set likelihood term and its weight λ.
    pub retain: Option<(&'a SequenceNll, f64)>,
}

/// Value of the surrogate with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateEval {
    pub objective: f64,
    /// Mean per-token k3 estimate toward the reference.
    pub mean_kl: f64,
    /// Fraction of scored tokens whose term was clipped.
    pub clip_fraction: f64,
    pub grads: Vec<TokenGrad>,
}

impl SurrogateObjective<'_> {
    pub fn evaluate(&self, policy: &Policy) -> Result<SurrogateEval> {
        let eps = self.clip_epsilon;
        let batch = self.groups.len().max(1) as f64;
        let mut cur_cache: HashMap<ContextKey, Vec<f64>> = HashMap::new();
        let mut ref_cache: HashMap<ContextKey, Vec<f64>> = HashMap::new();
        let mut objective = 0.0;
        let mut kl_sum = 0.0;
        let mut tokens = 0usize;
        let mut clipped = 0usize;
        let mut grads = Vec::new();
        for (gi, group) in self.groups.iter().enumerate() {
            if group.advantages.len() != group.completions.len() {
                return Err(Error::InvalidInput(format!("group {gi} has no advantages")));
            }
            let w = group.completions.len() as f64;
            for (ci, c) in group.completions.iter().enumerate() {
                let len = c.tokens.len();
                if len == 0 {
                    continue;
                }
                let adv = group.advantages[ci];
                let scale = 1.0 / (len as f64 * w * batch);
                for i in 0..len {
                    let ctx = policy.context(&group.query, &c.tokens[..i]);
                    let tok = c.tokens[i] as usize;
                    let lcur = cur_cache
                        .entry(ctx.clone())
                        .or_insert_with(|| policy.next_token_log_distribution(&ctx))[tok];
                    let lref = ref_cache
                        .entry(ctx.clone())
                        .or_insert_with(|| self.reference.next_token_log_distribution(&ctx))[tok];
                    let lold = group.old_logprobs[ci][i].max(OLD_PROB_FLOOR.ln());
                    let ratio = (lcur - lold).exp();
                    if !ratio.is_finite() {
                        return Err(Error::DegenerateRatio { group: gi, completion: ci, token: i });
                    }
                    let unclipped = ratio * adv;
                    let clipped_term = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
                    let (term, dterm) = if unclipped <= clipped_term {
                        (unclipped, unclipped)
                    } else {
                        clipped += 1;
                        (clipped_term, 0.0)
                    };
                    let kl = kl_estimate(lref, lcur);
                    // d k3 / d log π_cur = 1 − π_ref / π_cur
                    let dkl = -(lref - lcur).exp_m1();
                    objective += scale * (term - self.kl_beta * kl);
                    kl_sum += kl;
                    tokens += 1;
                    grads.push(TokenGrad {
                        context: ctx,
                        token: c.tokens[i],
                        weight: scale * (dterm - self.kl_beta * dkl),
                    });
                }
            }
        }
        if let Some((nll, weight)) = self.retain {
            if weight > 0.0 && !nll.is_empty() {
                let (value, nll_grads) = nll.value_and_token_grads(policy)?;
                objective -= weight * value;
                grads.extend(nll_grads.into_iter().map(|mut g| {
                    g.weight *= -weight;
                    g
                }));
            }
        }
        let denom = tokens.max(1) as f64;
        Ok(SurrogateEval {
            objective,
            mean_kl: kl_sum / denom,
            clip_fraction: clipped as f64 / denom,
            grads,
        })
    }
}

impl Objective for SurrogateObjective<'_> {
    fn value_and_token_grads(&self, policy: &Policy) -> Result<(f64, Vec<TokenGrad>)> {
        let eval = self.evaluate(policy)?;
        Ok((eval.objective, eval.grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use crate::grpo::compute_advantages;
    use crate::policy::{loss_gradient, Completion};

    fn single_token_group(policy: &Policy, old_prob: f64, adv: f64) -> GroupSample {
        let _ = policy;
        GroupSample {
            query: vec![0],
            completions: vec![Completion {
                prompt: vec![0],
                tokens: vec![1],
                logprobs: vec![old_prob.ln()],
                terminated: true,
                seed: 0,
            }],
            from_base: vec![false],
            old_logprobs: vec![vec![old_prob.ln()]],
            rewards: vec![1.0],
            advantages: vec![adv],
        }
    }

    fn setup() -> Policy {
        let v = Vocabulary::build(&["a b c"]).unwrap();
        Policy::new(&v, 2)
    }

    fn objective_with(policy: &Policy, ratio: f64, adv: f64) -> (f64, bool) {
        // uniform over 6 tokens: π_cur = 1/6, choose π_old so Π = ratio
        let g = [single_token_group(policy, 1.0 / 6.0 / ratio, adv)];
        let obj = SurrogateObjective {
            groups: &g,
            reference: policy,
            clip_epsilon: 0.2,
            kl_beta: 0.0,
            retain: None,
        };
        let (value, grad) = loss_gradient(policy, &obj).unwrap();
        (value, grad.is_zero())
    }

    #[test]
    fn clip_arithmetic() {
        let p = setup();
        let (v, zero) = objective_with(&p, 1.3, 1.0);
        assert!((v - 1.2).abs() < 1e-12, "{v}");
        assert!(zero, "clipped positive-advantage term must have no gradient");
        let (v, zero) = objective_with(&p, 0.7, -1.0);
        assert!((v + 0.8).abs() < 1e-12, "{v}");
        assert!(zero);
        let (v, zero) = objective_with(&p, 1.1, 1.0);
        assert!((v - 1.1).abs() < 1e-12);
        assert!(!zero);
        // the pessimistic side is never clipped
        let (v, zero) = objective_with(&p, 0.5, 1.0);
        assert!((v - 0.5).abs() < 1e-12);
        assert!(!zero);
    }

    #[test]
    fn unit_ratio_gives_mean_advantage() {
        let p = setup();
        let adv = compute_advantages(&[1.0, 0.0, 1.0, 1.0], 1e-8);
        let completions: Vec<Completion> = (0..4)
            .map(|_| Completion {
                prompt: vec![0],
                tokens: vec![1, 2],
                logprobs: vec![-(6f64.ln()); 2],
                terminated: true,
                seed: 0,
            })
            .collect();
        let g = [GroupSample {
            query: vec![0],
            old_logprobs: completions.iter().map(|c| c.logprobs.clone()).collect(),
            completions,
            from_base: vec![false; 4],
            rewards: vec![1.0, 0.0, 1.0, 1.0],
            advantages: adv,
        }];
        let obj = SurrogateObjective {
            groups: &g,
            reference: &p,
            clip_epsilon: 0.2,
            kl_beta: 0.0,
            retain: None,
        };
        let e = obj.evaluate(&p).unwrap();
        assert!(e.objective.abs() < 1e-9);
        assert_eq!(e.mean_kl, 0.0);
    }

    #[test]
    fn zero_advantage_means_zero_policy_gradient() {
        let p = setup();
        let g = [single_token_group(&p, 0.1, 0.0)];
        let obj = SurrogateObjective {
            groups: &g,
            reference: &p,
            clip_epsilon: 0.2,
            kl_beta: 0.5,
            retain: None,
        };
        let (_, grad) = loss_gradient(&p, &obj).unwrap();
        assert!(grad.is_zero());
    }

    #[test]
    fn underflowing_old_probability_is_floored() {
        let p = setup();
        let mut g = single_token_group(&p, 0.5, 1.0);
        g.old_logprobs[0][0] = f64::NEG_INFINITY;
        let groups = [g];
        let obj = SurrogateObjective {
            groups: &groups,
            reference: &p,
            clip_epsilon: 0.2,
            kl_beta: 0.0,
            retain: None,
        };
        let e = obj.evaluate(&p).unwrap();
        assert!((e.objective - 1.2).abs() < 1e-12);
    }

    #[test]
    fn non_finite_ratio_is_reported() {
        let v = Vocabulary::build(&["a b c"]).unwrap();
        let mut p = Policy::new(&v, 2);
        p.fallback_mut()[1] = f64::NAN;
        let g = single_token_group(&p, 0.5, 1.0);
        let groups = [g];
        let obj = SurrogateObjective {
            groups: &groups,
            reference: &p,
            clip_epsilon: 0.2,
            kl_beta: 0.0,
            retain: None,
        };
        assert!(matches!(
            obj.evaluate(&p),
            Err(Error::DegenerateRatio { group: 0, completion: 0, token: 0 })
        ));
    }
}
