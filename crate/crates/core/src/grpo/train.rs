use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{
    compute_advantages, sample_group, score_group, GroupSample, StepRecord, SurrogateObjective,
    TrainConfig, TrainTrace,
};
use crate::corpus::TokenId;
use crate::error::{Error, Result};
use crate::matcher::PhraseAutomaton;
use crate::policy::{gradient_from_token_grads, Example, Policy, SequenceNll};
use crate::seed::{derive_seed, stream_rng};
use crate::theory::{estimate_leakage, LeakageConfig, Mixture};

/// Hooks called by [`purge_train`] as the run progresses.
pub trait Observer {
    /// After every update, with the updated policy.
    fn on_step(&mut self, _record: &StepRecord, _policy: &Policy) -> Result<()> {
        Ok(())
    }

    /// After every outer iteration `t ≥ 1`.
    fn on_iteration(&mut self, _t: usize, _policy: &Policy) -> Result<()> {
        Ok(())
    }
}

pub struct NoopObserver;

impl Observer for NoopObserver {}

/// A finished run.
#[derive(Debug, Clone)]
pub struct PurgeRun {
    pub policy: Policy,
    pub trace: TrainTrace,
}

/// A run aborted by an error; the trace holds everything recorded before it.
#[derive(Debug)]
pub struct PurgeFailure {
    pub error: Error,
    pub trace: TrainTrace,
}

impl From<PurgeFailure> for Error {
    fn from(f: PurgeFailure) -> Self {
        f.error
    }
}

/// Leakage of the policy actually being sampled, `(1 − α) π_t + α π_base`.
fn measure(
    policy: &Policy,
    base: &Policy,
    queries: &[Vec<TokenId>],
    automaton: &PhraseAutomaton,
    cfg: &TrainConfig,
    t: usize,
) -> Result<crate::theory::LeakageEstimate> {
    let lc = LeakageConfig {
        samples: cfg.leakage_samples,
        max_len: cfg.max_len,
        temperature: cfg.temperature,
        seed: derive_seed(cfg.seed, &format!("leakage/{t}")),
    };
    let mixture = Mixture { current: policy, base, alpha: cfg.mix_alpha };
    estimate_leakage(&mixture, queries, automaton, &lc)
}

/// Unlearns `automaton`'s phrases from `base` by GRPO on `queries`.
///
/// Loop nesting: `iterations` outer iterations (reference refreshed at the
/// start of each), `epochs` passes over the queries, one old-policy snapshot
/// and one sampled group per query for each batch, then `inner_updates`
/// ascent steps on the surrogate. With `retain_weight > 0` the retain-set
/// log-likelihood of `retain` joins the objective.
///
/// Leakage is measured before training and after every outer iteration
/// when `leakage_samples > 0`. The run is a pure function of its inputs.
pub fn purge_train(
    base: &Policy,
    automaton: &PhraseAutomaton,
    queries: &[Vec<TokenId>],
    retain: &[Example],
    cfg: &TrainConfig,
    observer: &mut dyn Observer,
) -> std::result::Result<PurgeRun, PurgeFailure> {
    let mut trace = TrainTrace::new("purge", &cfg.hash(), cfg.seed);
    let fail = |error: Error, trace: TrainTrace| PurgeFailure { error, trace };
    if let Err(e) = cfg.validate() {
        return Err(fail(e, trace));
    }
    if queries.is_empty() {
        return Err(fail(Error::InvalidInput("no unlearning queries".into()), trace));
    }
    let mut policy = base.clone();
    if cfg.leakage_samples > 0 {
        match measure(&policy, base, queries, automaton, cfg, 0) {
            Ok(e) => trace.leakage.points.push((0, e)),
            Err(e) => return Err(fail(e, trace)),
        }
    }
    let retain_nll = SequenceNll::new(base, retain, true);
    let shuffle_seed = derive_seed(cfg.seed, "shuffle");
    let sample_seed = derive_seed(cfg.seed, "groups");
    let mut step = 0usize;
    let mut batch_counter = 0u64;
    for t in 1..=cfg.iterations {
        let reference = policy.clone();
        for epoch in 0..cfg.epochs {
            let mut order: Vec<usize> = (0..queries.len()).collect();
            if queries.len() > cfg.batch_size {
                let mut rng = stream_rng(shuffle_seed, ((t - 1) * cfg.epochs + epoch) as u64);
                order.shuffle(&mut rng);
            }
            for batch in order.chunks(cfg.batch_size) {
                let old = policy.clone();
                let base_index = batch_counter * queries.len() as u64;
                batch_counter += 1;
                let mut groups: Vec<GroupSample> = batch
                    .par_iter()
                    .map(|&qi| {
                        let mut rng = stream_rng(sample_seed, base_index + qi as u64);
                        sample_group(&old, base, &queries[qi], cfg, &mut rng)
                    })
                    .collect();
                for g in &mut groups {
                    g.rewards = score_group(g, automaton);
                    g.advantages = compute_advantages(&g.rewards, cfg.adv_epsilon);
                }
                let reward_mean = groups.iter().flat_map(|g| &g.rewards).sum::<f64>()
                    / groups.iter().map(|g| g.rewards.len()).sum::<usize>() as f64;
                policy.ensure_rows(
                    groups
                        .iter()
                        .flat_map(|g| {
                            g.completions
                                .iter()
                                .flat_map(|c| policy_contexts(&old, &g.query, &c.tokens))
                        })
                        .collect::<Vec<_>>()
                        .iter(),
                );
                let objective = SurrogateObjective {
                    groups: &groups,
                    reference: &reference,
                    clip_epsilon: cfg.clip_epsilon,
                    kl_beta: cfg.kl_beta,
                    retain: Some((&retain_nll, cfg.retain_weight)),
                };
                for _ in 0..cfg.inner_updates {
                    step += 1;
                    let eta = cfg.schedule.step_size(cfg.step_size, step);
                    let eval = match objective.evaluate(&policy) {
                        Ok(e) => e,
                        Err(e) => return Err(fail(e, trace)),
                    };
                    let grad = match gradient_from_token_grads(&policy, eval.grads) {
                        Ok(g) => g,
                        Err(e) => return Err(fail(e, trace)),
                    };
                    if let Err(e) = policy.apply_update(&grad, eta) {
                        return Err(fail(e, trace));
                    }
                    let record = StepRecord {
                        t,
                        epoch,
                        step,
                        step_size: eta,
                        objective: eval.objective,
                        reward_mean: Some(reward_mean),
                        kl: eval.mean_kl,
                    };
                    if let Err(e) = observer.on_step(&record, &policy) {
                        trace.steps.push(record);
                        return Err(fail(e, trace));
                    }
                    trace.steps.push(record);
                }
            }
        }
        if cfg.leakage_samples > 0 {
            match measure(&policy, base, queries, automaton, cfg, t) {
                Ok(e) => trace.leakage.points.push((t, e)),
                Err(e) => return Err(fail(e, trace)),
            }
        }
        if let Err(e) = observer.on_iteration(t, &policy) {
            return Err(fail(e, trace));
        }
    }
    Ok(PurgeRun { policy, trace })
}

fn policy_contexts(
    policy: &Policy,
    query: &[TokenId],
    tokens: &[TokenId],
) -> Vec<crate::policy::ContextKey> {
    (0..tokens.len()).map(|i| policy.context(query, &tokens[..i])).collect()
}
