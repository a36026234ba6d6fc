//! Comparison methods on the same policy class: an in-context guardrail
//! prompt (ICU), gradient ascent (GA), preference optimization (DPO),
//! negative preference optimization (NPO) and rejection tuning (RT).
//!
//! Every trainer emits the same [`TrainTrace`] format as PURGE and watches
//! for collapse: forget-set NLL above a cap, or utility-set NLL inflated
//! past a ratio of its starting value.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, Vocabulary};
use crate::error::{Error, Result};
use crate::grpo::{kl_estimate, StepRecord, TrainTrace};
use crate::matcher::PhraseAutomaton;
use crate::policy::{
    loss_gradient, log_softmax, ContextKey, Example, Objective, Policy, SequenceNll, TokenGrad,
};
use crate::seed::{derive_seed, sha256_hex, stream_rng};
use crate::theory::{estimate_leakage, LeakageConfig};

/// Guardrail prompt prepended by ICU, with `{target}` substituted.
pub const ICU_TEMPLATE: &str = "You are an AI Assistant who is supposed to unlearn about {target} and provide answers without its knowledge as if you never knew about it. Don’t tell anyone that you unlearned anything.";

/// Fixed answer used by rejection tuning.
pub const REFUSAL: &str = "i do not know";

/// The guardrail text for `target`.
pub fn icu_text(target: &str) -> Result<String> {
    if target.trim().is_empty() {
        return Err(Error::EmptyTarget);
    }
    Ok(ICU_TEMPLATE.replace("{target}", target))
}

/// Prepends the tokenized guardrail to `prompt`; parameters are untouched.
pub fn icu_wrap(vocab: &Vocabulary, prompt: &[TokenId], target: &str) -> Result<Vec<TokenId>> {
    let mut out = vocab.encode(&icu_text(target)?);
    out.extend_from_slice(prompt);
    Ok(out)
}

/// Query with a counterfactual preferred answer and the true, dispreferred one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt: Vec<TokenId>,
    pub preferred: Vec<TokenId>,
    pub dispreferred: Vec<TokenId>,
}

/// Builds a pair for every forget example whose answer contains a forbidden
/// phrase. Each forbidden span is replaced by the same number of words drawn
/// uniformly from vocabulary words that occur in no forbidden phrase.
pub fn build_preference_pairs(
    forget: &[Example],
    automaton: &PhraseAutomaton,
    vocab: &Vocabulary,
    seed: u64,
) -> Result<Vec<PreferencePair>> {
    let banned: BTreeSet<TokenId> = automaton.phrases().iter().flatten().copied().collect();
    let pool: Vec<TokenId> = vocab.word_ids().filter(|t| !banned.contains(t)).collect();
    if pool.is_empty() {
        return Err(Error::InvalidInput("no replacement words outside the forget corpus".into()));
    }
    let mut pairs = Vec::new();
    for (i, ex) in forget.iter().enumerate() {
        let mut rng = stream_rng(seed, i as u64);
        let mut preferred = ex.answer.clone();
        let mut changed = false;
        let mut from = 0;
        while let Some(m) = automaton.find_forbidden(&preferred[from..]) {
            for slot in &mut preferred[from + m.start..from + m.end] {
                *slot = pool[rng.random_range(0..pool.len())];
            }
            changed = true;
            from += m.end;
        }
        if changed {
            pairs.push(PreferencePair {
                prompt: ex.prompt.clone(),
                preferred,
                dispreferred: ex.answer.clone(),
            });
        }
    }
    Ok(pairs)
}

/// Forget queries paired with the refusal answer.
pub fn rejection_examples(vocab: &Vocabulary, forget: &[Example]) -> Vec<Example> {
    let refusal = vocab.encode(REFUSAL);
    forget
        .iter()
        .map(|ex| Example { prompt: ex.prompt.clone(), answer: refusal.clone() })
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `−ln σ(x)`, stable for large `|x|`.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

type Positions = Vec<(ContextKey, TokenId)>;

fn answer_logprob(policy: &Policy, positions: &Positions) -> f64 {
    positions.iter().map(|(c, t)| policy.token_logprob(c, *t)).sum()
}

/// Gradient-ascent loss: the negated mean answer-token NLL, so that
/// minimizing it raises the forget-set NLL.
#[derive(Debug, Clone)]
pub struct GaLoss {
    nll: SequenceNll,
}

impl GaLoss {
    pub fn new(policy: &Policy, forget: &[Example]) -> Self {
        Self { nll: SequenceNll::new(policy, forget, false) }
    }

    fn positions(&self) -> &[(ContextKey, TokenId)] {
        self.nll.positions()
    }
}

impl Objective for GaLoss {
    fn value_and_token_grads(&self, policy: &Policy) -> Result<(f64, Vec<TokenGrad>)> {
        let (v, mut g) = self.nll.value_and_token_grads(policy)?;
        g.iter_mut().for_each(|t| t.weight = -t.weight);
        Ok((-v, g))
    }
}

/// Mean over pairs of `−ln σ(β (ln π(y_w)/π_ref(y_w) − ln π(y_l)/π_ref(y_l)))`.
#[derive(Debug, Clone)]
pub struct DpoLoss {
    pairs: Vec<(Positions, f64, Positions, f64)>,
    beta: f64,
}

impl DpoLoss {
    pub fn new(reference: &Policy, pairs: &[PreferencePair], beta: f64) -> Self {
        let pairs = pairs
            .iter()
            .map(|p| {
                let w = reference.positions(&p.prompt, &p.preferred, false);
                let l = reference.positions(&p.prompt, &p.dispreferred, false);
                let (rw, rl) = (answer_logprob(reference, &w), answer_logprob(reference, &l));
                (w, rw, l, rl)
            })
            .collect();
        Self { pairs, beta }
    }

    /// Mean `ln π(y_w) − ln π(y_l)`.
    pub fn mean_margin(&self, policy: &Policy) -> f64 {
        let total: f64 = self
            .pairs
            .iter()
            .map(|(w, _, l, _)| answer_logprob(policy, w) - answer_logprob(policy, l))
            .sum();
        total / self.pairs.len().max(1) as f64
    }

    fn positions(&self) -> impl Iterator<Item = &(ContextKey, TokenId)> {
        self.pairs.iter().flat_map(|(w, _, l, _)| w.iter().chain(l))
    }
}

impl Objective for DpoLoss {
    fn value_and_token_grads(&self, policy: &Policy) -> Result<(f64, Vec<TokenGrad>)> {
        if self.pairs.is_empty() {
            return Ok((0.0, Vec::new()));
        }
        let n = self.pairs.len() as f64;
        let mut total = 0.0;
        let mut grads = Vec::new();
        for (w, rw, l, rl) in &self.pairs {
            let z = self.beta * ((answer_logprob(policy, w) - rw) - (answer_logprob(policy, l) - rl));
            total += neg_log_sigmoid(z);
            // d(−ln σ(z))/dz = −σ(−z)
            let dz = -sigmoid(-z) * self.beta / n;
            grads.extend(w.iter().map(|(c, t)| TokenGrad { context: c.clone(), token: *t, weight: dz }));
            grads.extend(l.iter().map(|(c, t)| TokenGrad { context: c.clone(), token: *t, weight: -dz }));
        }
        Ok((total / n, grads))
    }
}

/// Mean over forget answers of `−ln σ(−β ln π(y)/π_ref(y))`.
#[derive(Debug, Clone)]
pub struct NpoLoss {
    answers: Vec<(Positions, f64)>,
    beta: f64,
}

impl NpoLoss {
    pub fn new(reference: &Policy, forget: &[Example], beta: f64) -> Self {
        let answers = forget
            .iter()
            .map(|ex| {
                let p = reference.positions(&ex.prompt, &ex.answer, false);
                let r = answer_logprob(reference, &p);
                (p, r)
            })
            .collect();
        Self { answers, beta }
    }

    fn positions(&self) -> impl Iterator<Item = &(ContextKey, TokenId)> {
        self.answers.iter().flat_map(|(p, _)| p)
    }
}

impl Objective for NpoLoss {
    fn value_and_token_grads(&self, policy: &Policy) -> Result<(f64, Vec<TokenGrad>)> {
        if self.answers.is_empty() {
            return Ok((0.0, Vec::new()));
        }
        let n = self.answers.len() as f64;
        let mut total = 0.0;
        let mut grads = Vec::new();
        for (p, r) in &self.answers {
            let x = -self.beta * (answer_logprob(policy, p) - r);
            total += neg_log_sigmoid(x);
            // d(−ln σ(x))/d ln π = σ(−x) β
            let weight = sigmoid(-x) * self.beta / n;
            grads.extend(p.iter().map(|(c, t)| TokenGrad { context: c.clone(), token: *t, weight }));
        }
        Ok((total / n, grads))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollapseConfig {
    /// Mean forget-answer NLL (nats per token) beyond which the model is collapsed.
    pub forget_nll_cap: f64,
    /// Collapse when utility-set NLL exceeds this multiple of its starting value.
    pub utility_ratio: f64,
}

impl Default for CollapseConfig {
    fn default() -> Self {
        Self { forget_nll_cap: 10.0, utility_ratio: 2.0 }
    }
}

/// Collapse criterion shared by every method.
#[derive(Debug, Clone)]
pub struct CollapseMonitor {
    forget: SequenceNll,
    utility: SequenceNll,
    initial_utility: f64,
    cfg: CollapseConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseStatus {
    pub forget_nll: f64,
    pub utility_nll: f64,
    pub collapsed: bool,
}

impl CollapseMonitor {
    pub fn new(initial: &Policy, forget: &[Example], utility: &[Example], cfg: CollapseConfig) -> Result<Self> {
        let forget = SequenceNll::new(initial, forget, false);
        let utility = SequenceNll::new(initial, utility, true);
        let initial_utility = utility.value(initial)?;
        Ok(Self { forget, utility, initial_utility, cfg })
    }

    pub fn check(&self, policy: &Policy) -> Result<CollapseStatus> {
        let forget_nll = self.forget.value(policy)?;
        let utility_nll = self.utility.value(policy)?;
        let collapsed = forget_nll > self.cfg.forget_nll_cap
            || utility_nll > self.cfg.utility_ratio * self.initial_utility;
        Ok(CollapseStatus { forget_nll, utility_nll, collapsed })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub epochs: usize,
    pub step_size: f64,
    /// Inverse temperature of DPO and NPO.
    pub beta: f64,
    pub collapse: CollapseConfig,
    /// Leakage samples at the start and end of a run; 0 disables.
    pub leakage_samples: usize,
    pub max_len: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            epochs: 80,
            step_size: 1.0,
            beta: 0.1,
            collapse: CollapseConfig::default(),
            leakage_samples: 2000,
            max_len: 12,
            temperature: 1.0,
            seed: 0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidConfig(format!("step_size must be positive, got {}", self.step_size)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta must be non-negative, got {}", self.beta)));
        }
        if self.max_len == 0 {
            return Err(Error::InvalidConfig("max_len must be positive".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

/// Queries and matcher used to record leakage in baseline traces.
#[derive(Debug, Clone, Copy)]
pub struct LeakageProbe<'a> {
    pub queries: &'a [Vec<TokenId>],
    pub automaton: &'a PhraseAutomaton,
}

#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub policy: Policy,
    pub trace: TrainTrace,
    pub collapsed: bool,
    /// Status after the last completed epoch.
    pub status: CollapseStatus,
}

#[derive(Clone, Copy, PartialEq)]
enum Update {
    Plain,
    RowNormalized,
}

fn position_kl(reference: &Policy, policy: &Policy, positions: &[(ContextKey, TokenId)]) -> f64 {
    if positions.is_empty() {
        return 0.0;
    }
    let total: f64 = positions
        .iter()
        .map(|(c, t)| {
            let r = log_softmax(reference.logits(c))[*t as usize];
            kl_estimate(r, policy.token_logprob(c, *t))
        })
        .sum();
    total / positions.len() as f64
}

fn leak(policy: &Policy, probe: &LeakageProbe, cfg: &BaselineConfig, t: usize) -> Result<crate::theory::LeakageEstimate> {
    let lc = LeakageConfig {
        samples: cfg.leakage_samples,
        max_len: cfg.max_len,
        temperature: cfg.temperature,
        seed: derive_seed(cfg.seed, &format!("leakage/{t}")),
    };
    estimate_leakage(policy, probe.queries, probe.automaton, &lc)
}

#[allow(clippy::too_many_arguments)]
fn run(
    method: &str,
    initial: &Policy,
    loss: &dyn Objective,
    positions: Vec<(ContextKey, TokenId)>,
    update: Update,
    monitor: &CollapseMonitor,
    cfg: &BaselineConfig,
    probe: Option<LeakageProbe>,
) -> Result<BaselineRun> {
    cfg.validate()?;
    let mut trace = TrainTrace::new(method, &cfg.hash(), cfg.seed);
    let mut policy = initial.clone();
    let measure = probe.filter(|_| cfg.leakage_samples > 0);
    if let Some(p) = &measure {
        trace.leakage.points.push((0, leak(&policy, p, cfg, 0)?));
    }
    if cfg.epochs > 0 {
        policy.ensure_rows(positions.iter().map(|(c, _)| c));
    }
    let counts = {
        let mut m = std::collections::BTreeMap::new();
        for (c, _) in &positions {
            *m.entry(policy.row_id(c)).or_insert(0usize) += 1;
        }
        m
    };
    let mut status = monitor.check(&policy)?;
    for epoch in 0..cfg.epochs {
        if status.collapsed {
            break;
        }
        let (value, mut grad) = loss_gradient(&policy, loss)?;
        match update {
            Update::Plain => grad.scale(-1.0),
            Update::RowNormalized => {
                let n = positions.len() as f64;
                for (id, count) in &counts {
                    grad.scale_row(id, -n / *count as f64);
                }
            }
        }
        policy.apply_update(&grad, cfg.step_size)?;
        trace.steps.push(StepRecord {
            t: epoch + 1,
            epoch,
            step: epoch + 1,
            step_size: cfg.step_size,
            objective: value,
            reward_mean: None,
            kl: position_kl(initial, &policy, &positions),
        });
        status = monitor.check(&policy)?;
    }
    if let Some(p) = &measure {
        let t = trace.steps.len();
        if t > 0 {
            trace.leakage.points.push((t, leak(&policy, p, cfg, t)?));
        }
    }
    Ok(BaselineRun { policy, trace, collapsed: status.collapsed, status })
}

/// Gradient ascent on the forget-set answer NLL, stopping once collapsed.
pub fn ga_unlearn(
    policy: &Policy,
    forget: &[Example],
    monitor: &CollapseMonitor,
    cfg: &BaselineConfig,
    probe: Option<LeakageProbe>,
) -> Result<BaselineRun> {
    if forget.is_empty() {
        return Err(Error::InvalidInput("empty forget set".into()));
    }
    let loss = GaLoss::new(policy, forget);
    let positions = loss.positions().to_vec();
    run("ga", policy, &loss, positions, Update::Plain, monitor, cfg, probe)
}

/// Gradient descent on the DPO loss against the frozen input policy.
pub fn dpo_unlearn(
    policy: &Policy,
    pairs: &[PreferencePair],
    monitor: &CollapseMonitor,
    cfg: &BaselineConfig,
    probe: Option<LeakageProbe>,
) -> Result<BaselineRun> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no preference pairs".into()));
    }
    let loss = DpoLoss::new(policy, pairs, cfg.beta);
    let positions = loss.positions().cloned().collect();
    run("dpo", policy, &loss, positions, Update::Plain, monitor, cfg, probe)
}

/// Gradient descent on the NPO loss against the frozen input policy.
pub fn npo_unlearn(
    policy: &Policy,
    forget: &[Example],
    monitor: &CollapseMonitor,
    cfg: &BaselineConfig,
    probe: Option<LeakageProbe>,
) -> Result<BaselineRun> {
    if forget.is_empty() {
        return Err(Error::InvalidInput("empty forget set".into()));
    }
    let loss = NpoLoss::new(policy, forget, cfg.beta);
    let positions = loss.positions().cloned().collect();
    run("npo", policy, &loss, positions, Update::Plain, monitor, cfg, probe)
}

/// Maximum-likelihood training on refusal answers, with the same
/// row-normalized steps as base-model training.
pub fn rt_unlearn(
    policy: &Policy,
    rejections: &[Example],
    monitor: &CollapseMonitor,
    cfg: &BaselineConfig,
    probe: Option<LeakageProbe>,
) -> Result<BaselineRun> {
    if rejections.is_empty() {
        return Err(Error::InvalidInput("no rejection examples".into()));
    }
    let loss = SequenceNll::new(policy, rejections, true);
    let positions = loss.positions().to_vec();
    run("rt", policy, &loss, positions, Update::RowNormalized, monitor, cfg, probe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::MatchMode;
    use crate::policy::train_mle;

    fn world() -> (Vocabulary, Policy, Vec<Example>, Vec<Example>) {
        let v = Vocabulary::build(&["who wrote carrie stephen king what is blue sky red apple i do not know paris capital france"]).unwrap();
        let forget = vec![Example { prompt: v.encode("who wrote carrie"), answer: v.encode("stephen king") }];
        let retain = vec![
            Example { prompt: v.encode("what is sky"), answer: v.encode("blue") },
            Example { prompt: v.encode("capital france"), answer: v.encode("paris") },
        ];
        let mut p = Policy::new(&v, 2);
        let all: Vec<Example> = forget.iter().chain(&retain).cloned().collect();
        train_mle(&mut p, &all, 100, 1.0).unwrap();
        (v, p, forget, retain)
    }

    fn quiet() -> BaselineConfig {
        BaselineConfig { leakage_samples: 0, ..Default::default() }
    }

    #[test]
    fn icu_template_and_errors() {
        let v = Vocabulary::build(&[icu_text("stephen king").unwrap().as_str(), "who wrote carrie"]).unwrap();
        let q = v.encode("who wrote carrie");
        let once = icu_wrap(&v, &q, "stephen king").unwrap();
        let template = v.encode(&icu_text("stephen king").unwrap());
        assert_eq!(&once[..template.len()], template.as_slice());
        assert_eq!(v.decode(&template[..6]), "you are an ai assistant who");
        assert!(matches!(icu_wrap(&v, &q, "  "), Err(Error::EmptyTarget)));
        let twice = icu_wrap(&v, &once, "stephen king").unwrap();
        assert_eq!(twice.len(), 2 * template.len() + q.len());
    }

    #[test]
    fn preference_losses_start_at_ln2() {
        let (v, p, forget, _) = world();
        let automaton = PhraseAutomaton::compile(&[v.encode("stephen king")], MatchMode::Contiguous, v.unk()).unwrap();
        let pairs = build_preference_pairs(&forget, &automaton, &v, 3).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_ne!(pairs[0].preferred, pairs[0].dispreferred);
        assert_eq!(pairs[0].preferred.len(), pairs[0].dispreferred.len());
        assert!(!automaton.contains_forbidden(&pairs[0].preferred));
        let ln2 = std::f64::consts::LN_2;
        assert!((DpoLoss::new(&p, &pairs, 0.5).value(&p).unwrap() - ln2).abs() < 1e-15);
        assert!((NpoLoss::new(&p, &forget, 0.5).value(&p).unwrap() - ln2).abs() < 1e-15);
        let flat = DpoLoss::new(&p, &pairs, 0.0);
        let (value, grad) = loss_gradient(&p, &flat).unwrap();
        assert!((value - ln2).abs() < 1e-15);
        assert!(grad.is_zero());
    }

    #[test]
    fn npo_and_ga_agree_in_direction_at_init() {
        let (_, p, forget, _) = world();
        let (_, g_ga) = loss_gradient(&p, &GaLoss::new(&p, &forget)).unwrap();
        let (_, g_npo) = loss_gradient(&p, &NpoLoss::new(&p, &forget, 5.0)).unwrap();
        let cos = g_ga.dot(&g_npo) / (g_ga.norm() * g_npo.norm());
        assert!((cos - 1.0).abs() < 1e-12, "{cos}");
    }

    #[test]
    fn ga_raises_forget_nll_and_zero_epochs_is_identity() {
        let (_, p, forget, retain) = world();
        let monitor = CollapseMonitor::new(&p, &forget, &retain, CollapseConfig::default()).unwrap();
        let zero = ga_unlearn(&p, &forget, &monitor, &BaselineConfig { epochs: 0, ..quiet() }, None).unwrap();
        assert_eq!(zero.policy, p);
        let one = ga_unlearn(&p, &forget, &monitor, &BaselineConfig { epochs: 1, ..quiet() }, None).unwrap();
        let ctx = p.context(&forget[0].prompt, &[]);
        let tok = forget[0].answer[0];
        assert!(one.policy.logits(&ctx)[tok as usize] < p.logits(&ctx)[tok as usize]);
        let run = ga_unlearn(&p, &forget, &monitor, &BaselineConfig { epochs: 30, ..quiet() }, None).unwrap();
        let values: Vec<f64> = run.trace.steps.iter().map(|s| -s.objective).collect();
        assert!(values.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn ga_long_run_collapses() {
        let (_, p, forget, retain) = world();
        let monitor = CollapseMonitor::new(&p, &forget, &retain, CollapseConfig { forget_nll_cap: 6.0, ..Default::default() }).unwrap();
        let run = ga_unlearn(&p, &forget, &monitor, &BaselineConfig { epochs: 10_000, step_size: 5.0, ..quiet() }, None).unwrap();
        assert!(run.collapsed);
        assert!(run.trace.steps.len() < 10_000);
    }

    #[test]
    fn dpo_margin_grows_and_npo_lowers_forget_likelihood() {
        let (v, p, forget, retain) = world();
        let automaton = PhraseAutomaton::compile(&[v.encode("stephen king")], MatchMode::Contiguous, v.unk()).unwrap();
        let pairs = build_preference_pairs(&forget, &automaton, &v, 3).unwrap();
        let monitor = CollapseMonitor::new(&p, &forget, &retain, CollapseConfig::default()).unwrap();
        let run = dpo_unlearn(&p, &pairs, &monitor, &BaselineConfig { epochs: 20, ..quiet() }, None).unwrap();
        let loss = DpoLoss::new(&p, &pairs, 0.1);
        assert!(loss.mean_margin(&run.policy) > loss.mean_margin(&p));
        let npo = npo_unlearn(&p, &forget, &monitor, &BaselineConfig { epochs: 1, ..quiet() }, None).unwrap();
        let before = p.sequence_logprob(&forget[0].prompt, &forget[0].answer, false);
        let after = npo.policy.sequence_logprob(&forget[0].prompt, &forget[0].answer, false);
        assert!(after < before);
    }

    #[test]
    fn rt_memorizes_refusal() {
        let (v, p, forget, retain) = world();
        let monitor = CollapseMonitor::new(&p, &forget, &retain, CollapseConfig::default()).unwrap();
        let rejections = rejection_examples(&v, &forget);
        let zero = rt_unlearn(&p, &rejections, &monitor, &BaselineConfig { epochs: 0, ..quiet() }, None).unwrap();
        assert_eq!(zero.policy, p);
        let run = rt_unlearn(&p, &rejections, &monitor, &BaselineConfig { epochs: 200, ..quiet() }, None).unwrap();
        assert_eq!(v.decode(&run.policy.greedy(&forget[0].prompt, 8)), REFUSAL);
    }
}
