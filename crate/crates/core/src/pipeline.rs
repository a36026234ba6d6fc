//! End-to-end assembly: base-model training, forget-corpus construction, and
//! a ready-made [`Lab`] over the standard toy world.

use serde::{Deserialize, Serialize};

use crate::corpus::{
    collect_probes, extract_entities, select_topk, DatasetRecord, EvalSplits, ExtractConfig,
    ForgetCorpus, ProbeConfig, Split, TargetSpec, TokenId, Vocabulary,
};
use crate::error::{Error, Result};
use crate::fixture::{auxiliary_texts, ToyWorld};
use crate::matcher::{MatchMode, PhraseAutomaton};
use crate::policy::{train_mle, Example, MleReport, Policy};
use crate::seed::{derive_seed, sha256_hex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseConfig {
    pub order: usize,
    pub epochs: usize,
    pub step_size: f64,
}

impl Default for BaseConfig {
    fn default() -> Self {
        Self { order: 2, epochs: 200, step_size: 1.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForgetConfig {
    pub k: usize,
    pub probe_temperature: f64,
    pub max_len: usize,
    pub extract: ExtractConfig,
    pub match_mode: MatchMode,
}

impl Default for ForgetConfig {
    fn default() -> Self {
        Self {
            k: 50,
            probe_temperature: 1.0,
            max_len: 12,
            extract: ExtractConfig::default(),
            match_mode: MatchMode::Contiguous,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabConfig {
    pub base: BaseConfig,
    pub forget: ForgetConfig,
    pub seed: u64,
}

impl LabConfig {
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

/// Training pairs of the dataset.
pub fn training_examples(records: &[DatasetRecord], vocab: &Vocabulary) -> Vec<Example> {
    records
        .iter()
        .filter(|r| r.split == Split::Train)
        .map(|r| Example { prompt: vocab.encode(&r.query), answer: vocab.encode(&r.answer) })
        .collect()
}

/// Every text a vocabulary for `records` must cover, including the
/// auxiliary strings for each target named in the records.
pub fn dataset_texts(records: &[DatasetRecord]) -> Vec<String> {
    let targets: std::collections::BTreeSet<String> = records.iter().filter_map(|r| r.target.clone()).collect();
    let mut texts: Vec<String> = records.iter().flat_map(|r| [r.query.clone(), r.answer.clone()]).collect();
    texts.extend(auxiliary_texts(&targets.into_iter().collect::<Vec<_>>()));
    texts
}

/// The target with its distinct seed prompts: every query recorded for it.
pub fn target_spec(records: &[DatasetRecord], target: &str) -> TargetSpec {
    let mut seen = std::collections::BTreeSet::new();
    let prompts = records
        .iter()
        .filter(|r| r.target.as_deref() == Some(target) && seen.insert(r.query.clone()))
        .map(|r| r.query.clone())
        .collect();
    TargetSpec::new(target, prompts)
}

/// Distinct forget-split queries about `target`, in first-seen order.
pub fn target_queries(records: &[DatasetRecord], vocab: &Vocabulary, target: &str) -> Vec<Vec<TokenId>> {
    let mut seen = std::collections::BTreeSet::new();
    records
        .iter()
        .filter(|r| r.split == Split::Forget && r.target.as_deref() == Some(target))
        .map(|r| vocab.encode(&r.query))
        .filter(|q| seen.insert(q.clone()))
        .collect()
}

/// Training pairs unrelated to any target.
pub fn retain_examples(records: &[DatasetRecord], vocab: &Vocabulary) -> Vec<Example> {
    records
        .iter()
        .filter(|r| r.split == Split::Train && r.target.is_none())
        .map(|r| Example { prompt: vocab.encode(&r.query), answer: vocab.encode(&r.answer) })
        .collect()
}

/// Builds the vocabulary over `texts` and fits the base policy to the training split.
pub fn build_base<S: AsRef<str>>(
    records: &[DatasetRecord],
    texts: &[S],
    cfg: &BaseConfig,
) -> Result<(Vocabulary, Policy, MleReport)> {
    let vocab = Vocabulary::build(texts)?;
    let train = training_examples(records, &vocab);
    if train.is_empty() {
        return Err(Error::NoCorpus);
    }
    if cfg.order == 0 {
        return Err(Error::InvalidConfig("order must be at least 1".into()));
    }
    let mut policy = Policy::new(&vocab, cfg.order);
    let report = train_mle(&mut policy, &train, cfg.epochs, cfg.step_size)?;
    Ok((vocab, policy, report))
}

/// Probes `policy` with every probe query, extracts salient phrases for
/// `target`, and keeps the top `k`.
pub fn build_forget(
    policy: &Policy,
    vocab: &Vocabulary,
    records: &[DatasetRecord],
    target: &TargetSpec,
    cfg: &ForgetConfig,
    seed: u64,
) -> Result<ForgetCorpus> {
    target.validate(vocab)?;
    let prompts: Vec<&str> = records
        .iter()
        .filter(|r| r.split == Split::Probe)
        .map(|r| r.query.as_str())
        .collect();
    if prompts.is_empty() {
        return Err(Error::InvalidInput("dataset has no probe queries".into()));
    }
    let probe_cfg = ProbeConfig {
        temperature: cfg.probe_temperature,
        max_len: cfg.max_len,
        seed: derive_seed(seed, "probes"),
        strict: true,
    };
    let probes = collect_probes(policy, vocab, &prompts, &probe_cfg)?;
    let candidates = extract_entities(target, vocab, &probes, &cfg.extract)?;
    select_topk(&target.name, &candidates, cfg.k)
}

/// Everything an experiment on the toy world needs.
#[derive(Debug, Clone)]
pub struct Lab {
    pub world: ToyWorld,
    pub records: Vec<DatasetRecord>,
    pub vocab: Vocabulary,
    pub base: Policy,
    pub splits: EvalSplits,
    pub corpus: ForgetCorpus,
    pub automaton: PhraseAutomaton,
    /// Distinct target queries, the prompts PURGE trains on.
    pub queries: Vec<Vec<TokenId>>,
    /// Non-target training pairs.
    pub retain: Vec<Example>,
    pub config: LabConfig,
}

impl Lab {
    pub fn standard(seed: u64) -> Result<Self> {
        Self::build(ToyWorld::standard(), LabConfig { seed, ..Default::default() })
    }

    pub fn build(world: ToyWorld, config: LabConfig) -> Result<Self> {
        let records = world.records();
        let (vocab, base, _) = build_base(&records, &dataset_texts(&records), &config.base)?;
        let corpus = build_forget(&base, &vocab, &records, &world.target, &config.forget, config.seed)?;
        let automaton = PhraseAutomaton::from_corpus(&corpus, &vocab, config.forget.match_mode)?;
        let splits = EvalSplits::from_records(&records, &vocab);
        let queries = target_queries(&records, &vocab, &world.target.name);
        let retain = retain_examples(&records, &vocab);
        Ok(Self { world, records, vocab, base, splits, corpus, automaton, queries, retain, config })
    }
}
