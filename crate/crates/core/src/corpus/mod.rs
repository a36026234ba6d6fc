//! Vocabularies, probe collection and the synthetic forget corpus.

mod dataset;
mod entities;
mod probes;
mod vocab;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::Example;

pub use dataset::{
    read_dataset, read_forget_corpus, write_dataset, write_forget_corpus, DatasetRecord, Split,
    DATASET_FORMAT, FORGET_FORMAT,
};
pub use entities::{count_corpus_tokens, extract_entities, select_topk, Candidate, ExtractConfig, TokenCount};
pub use probes::{collect_probes, ProbeConfig, ProbeRecord};
pub use vocab::{fold, tokenize, TokenId, Vocabulary, BOS, EOS, UNK};

/// An unlearning target and the queries known to be about it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub name: String,
    pub seed_prompts: Vec<String>,
}

impl TargetSpec {
    pub fn new(name: impl Into<String>, seed_prompts: Vec<String>) -> Self {
        Self {
            name: name.into(),
            seed_prompts,
        }
    }

    /// Checks the target has at least one prompt and its name is fully in-vocabulary.
    pub fn validate(&self, vocab: &Vocabulary) -> Result<Vec<TokenId>> {
        if self.seed_prompts.is_empty() {
            return Err(Error::InvalidInput(format!(
                "target {:?} has no seed prompts",
                self.name
            )));
        }
        let ids = vocab.encode_strict(&self.name)?;
        if ids.is_empty() {
            return Err(Error::EmptyTarget);
        }
        Ok(ids)
    }
}

/// The per-target forbidden phrase set, ranked by salience.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgetCorpus {
    pub target: String,
    pub phrases: Vec<Vec<TokenId>>,
    pub scores: Vec<f64>,
    pub k: usize,
}

impl ForgetCorpus {
    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    pub fn surfaces(&self, vocab: &Vocabulary) -> Vec<String> {
        self.phrases.iter().map(|p| vocab.decode(p)).collect()
    }
}

/// Evaluation partitions. Retain and test are disjoint.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSplits {
    pub forget: Vec<Example>,
    pub neighbor: Vec<Example>,
    pub retain: Vec<Example>,
    pub test: Vec<Example>,
    pub members: Vec<Example>,
    pub nonmembers: Vec<Example>,
}

impl EvalSplits {
    /// Groups tokenized dataset records by split.
    pub fn from_records(records: &[DatasetRecord], vocab: &Vocabulary) -> Self {
        let mut splits = Self::default();
        for r in records {
            let ex = Example {
                prompt: vocab.encode(&r.query),
                answer: vocab.encode(&r.answer),
            };
            match r.split {
                Split::Forget => splits.forget.push(ex),
                Split::Neighbor => splits.neighbor.push(ex),
                Split::Retain => splits.retain.push(ex),
                Split::Test => splits.test.push(ex),
                Split::Member => splits.members.push(ex),
                Split::Nonmember => splits.nonmembers.push(ex),
                Split::Train | Split::Probe => {}
            }
        }
        splits
    }

    pub fn retain_test_disjoint(&self) -> bool {
        self.retain.iter().all(|r| !self.test.contains(r))
    }
}
