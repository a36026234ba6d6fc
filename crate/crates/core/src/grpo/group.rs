use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::corpus::TokenId;
use crate::matcher::PhraseAutomaton;
use crate::policy::{Completion, Policy};

/// The answers sampled for one query, with their rewards and advantages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSample {
    pub query: Vec<TokenId>,
    pub completions: Vec<Completion>,
    /// Whether each answer was drawn from the frozen base policy.
    pub from_base: Vec<bool>,
    /// Per-token log-probabilities of each answer under the old policy.
    pub old_logprobs: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl GroupSample {
    pub fn len(&self) -> usize {
        self.completions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.completions.is_empty()
    }
}

/// Draws `W` answers for `query`. Each answer comes, as a whole, from `base`
/// with probability `mix_alpha` and from `old` otherwise. Rewards and
/// advantages are left empty.
pub fn sample_group(
    old: &Policy,
    base: &Policy,
    query: &[TokenId],
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> GroupSample {
    let mut completions = Vec::with_capacity(cfg.group_size);
    let mut from_base = Vec::with_capacity(cfg.group_size);
    let mut old_logprobs = Vec::with_capacity(cfg.group_size);
    for _ in 0..cfg.group_size {
        let use_base = rng.random::<f64>() < cfg.mix_alpha;
        let source = if use_base { base } else { old };
        let c = source.sample_with(query, cfg.temperature, cfg.max_len, rng);
        let lp = if use_base {
            old.log_prob(query, &c.tokens)
        } else {
            c.logprobs.clone()
        };
        old_logprobs.push(lp);
        from_base.push(use_base);
        completions.push(c);
    }
    GroupSample {
        query: query.to_vec(),
        completions,
        from_base,
        old_logprobs,
        rewards: Vec::new(),
        advantages: Vec::new(),
    }
}

/// Φ(q): the reward of every answer in the group.
pub fn score_group(group: &GroupSample, automaton: &PhraseAutomaton) -> Vec<f64> {
    group
        .completions
        .iter()
        .map(|c| automaton.reward(&c.tokens))
        .collect()
}

/// Group-normalized rewards `(Φ_w − mean Φ) / (popstd Φ + ε)`.
pub fn compute_advantages(rewards: &[f64], adv_epsilon: f64) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt() + adv_epsilon;
    rewards.iter().map(|r| (r - mean) / denom).collect()
}

/// Single-sample KL estimate `r − ln r − 1` with `r = π_ref / π_cur` at the sampled token.
///
/// Computed as `expm1(d) − d` with `d = ln r`, which stays accurate for `r`
/// near 1; rounding can never make it negative.
pub fn kl_estimate(logp_ref: f64, logp_cur: f64) -> f64 {
    let d = logp_ref - logp_cur;
    (d.exp_m1() - d).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use crate::matcher::MatchMode;
    use crate::seed::stream_rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn advantage_examples() {
        assert_eq!(compute_advantages(&[1.0; 4], 1e-8), vec![0.0; 4]);
        assert!(close(&compute_advantages(&[1.0, 0.0], 1e-8), &[1.0, -1.0], 1e-7));
        let a = compute_advantages(&[1.0, 0.0, 1.0, 1.0], 1e-8);
        assert!(close(&a, &[0.5774, -1.7321, 0.5774, 0.5774], 1e-4), "{a:?}");
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_estimate(-1.0, -1.0), 0.0);
        assert!((kl_estimate(2f64.ln(), 0.0) - (1.0 - 2f64.ln())).abs() < 1e-15);
        assert!((kl_estimate(0.5f64.ln(), 0.0) - 0.1931471805599453).abs() < 1e-15);
        assert!((kl_estimate(2f64.ln(), 0.0) - 0.3068528194400547).abs() < 1e-15);
    }

    fn two_policies() -> (Vocabulary, Policy, Policy) {
        let v = Vocabulary::build(&["a b c"]).unwrap();
        let mut old = Policy::new(&v, 2);
        old.fallback_mut()[0] = 3.0;
        let mut base = Policy::new(&v, 2);
        base.fallback_mut()[1] = 3.0;
        (v, old, base)
    }

    #[test]
    fn alpha_boundaries() {
        let (_, old, base) = two_policies();
        for (alpha, expect) in [(0.0, false), (1.0, true)] {
            let cfg = TrainConfig { mix_alpha: alpha, group_size: 50, ..Default::default() };
            let g = sample_group(&old, &base, &[0], &cfg, &mut stream_rng(1, 0));
            assert!(g.from_base.iter().all(|&b| b == expect));
        }
    }

    #[test]
    fn old_logprobs_are_under_the_old_policy() {
        let (_, old, base) = two_policies();
        let cfg = TrainConfig { mix_alpha: 0.5, group_size: 20, ..Default::default() };
        let g = sample_group(&old, &base, &[0], &cfg, &mut stream_rng(2, 0));
        for (c, lp) in g.completions.iter().zip(&g.old_logprobs) {
            assert_eq!(lp, &old.log_prob(&[0], &c.tokens));
        }
    }

    #[test]
    fn mixing_fraction_is_binomial() {
        let (_, old, base) = two_policies();
        let cfg = TrainConfig { mix_alpha: 0.3, group_size: 8, max_len: 2, ..Default::default() };
        let groups = 10_000;
        let mut hits = 0usize;
        for i in 0..groups {
            let g = sample_group(&old, &base, &[0], &cfg, &mut stream_rng(3, i as u64));
            hits += g.from_base.iter().filter(|&&b| b).count();
        }
        let n = (groups * 8) as f64;
        let frac = hits as f64 / n;
        let sigma = (0.3 * 0.7 / n).sqrt();
        assert!((frac - 0.3).abs() < 3.0 * sigma, "{frac}");
    }

    #[test]
    fn scoring_uses_the_matcher() {
        let v = Vocabulary::build(&["rich man apple tree"]).unwrap();
        let phrases = vec![v.encode("apple"), v.encode("rich man")];
        let automaton = PhraseAutomaton::compile(&phrases, MatchMode::Contiguous, v.unk()).unwrap();
        let completion = |text: &str| Completion {
            prompt: vec![],
            tokens: v.encode(text),
            logprobs: vec![0.0; v.encode(text).len()],
            terminated: true,
            seed: 0,
        };
        let g = GroupSample {
            query: vec![],
            completions: vec![completion("rich man"), completion("man"), completion("")],
            from_base: vec![false; 3],
            old_logprobs: vec![],
            rewards: vec![],
            advantages: vec![],
        };
        assert_eq!(score_group(&g, &automaton), vec![0.0, 1.0, 1.0]);
    }
}
