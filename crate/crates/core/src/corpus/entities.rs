//! Salience-based phrase extraction. Candidate phrases are the n-grams
//! (n ≤ `max_n`) of answers the model gave to target queries, scored by how
//! often they occur there relative to answers to unrelated queries:
//!
//! ```text
//! score = df_target / N_target × (ln((1 + N_background) / (1 + df_background)) + 1)
//! ```
//!
//! where `df` counts answers containing the n-gram at least once.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ForgetCorpus, ProbeRecord, TargetSpec, TokenId, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    pub max_n: usize,
    /// Minimum surface length in characters, spaces included.
    pub min_chars: usize,
    /// Minimum number of target answers an n-gram must occur in.
    pub min_count: usize,
    /// Words that may not start or end a phrase.
    pub stoplist: BTreeSet<String>,
    /// Keep the bare target name as a candidate.
    pub include_target_name: bool,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            max_n: 3,
            min_chars: 3,
            min_count: 2,
            stoplist: default_stoplist(),
            include_target_name: true,
        }
    }
}

pub fn default_stoplist() -> BTreeSet<String> {
    [
        "a", "an", "the", "and", "or", "of", "in", "on", "at", "to", "by", "for", "with", "from",
        "is", "was", "are", "were", "be", "it", "its", "he", "she", "his", "her", "they", "their",
        "i", "am", "not", "sure", "do", "does", "did", "who", "what", "where", "when", "which",
        "that", "this", "as", "also", "about",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub phrase: Vec<TokenId>,
    pub surface: String,
    pub score: f64,
}

/// Descending score, then ascending surface string.
fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.surface.cmp(&b.surface))
}

fn contains_run(haystack: &[TokenId], needle: &[TokenId]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

fn ngrams(tokens: &[TokenId], max_n: usize) -> BTreeSet<Vec<TokenId>> {
    let mut out = BTreeSet::new();
    for n in 1..=max_n {
        for w in tokens.windows(n) {
            out.insert(w.to_vec());
        }
    }
    out
}

/// Scores candidate phrases describing `target`. With `include_target_name`
/// the bare name is always a candidate, scored level with the best phrase. A probe counts as
/// target-related when its query is one of the target's seed prompts or
/// its query or answer mentions the target name; all other probes form the
/// background pool.
pub fn extract_entities(
    target: &TargetSpec,
    vocab: &Vocabulary,
    probes: &[ProbeRecord],
    cfg: &ExtractConfig,
) -> Result<Vec<Candidate>> {
    if probes.is_empty() {
        return Err(Error::InvalidInput("no probes".into()));
    }
    let name = target.validate(vocab)?;
    let seeds: BTreeSet<Vec<TokenId>> = target.seed_prompts.iter().map(|p| vocab.encode(p)).collect();
    let (related, background): (Vec<&ProbeRecord>, Vec<&ProbeRecord>) = probes.iter().partition(|p| {
        seeds.contains(&p.query) || contains_run(&p.query, &name) || contains_run(&p.answer, &name)
    });
    if related.is_empty() {
        return Ok(Vec::new());
    }

    let mut df_target: BTreeMap<Vec<TokenId>, usize> = BTreeMap::new();
    for p in &related {
        for g in ngrams(&p.answer, cfg.max_n) {
            *df_target.entry(g).or_default() += 1;
        }
    }
    let mut df_background: BTreeMap<Vec<TokenId>, usize> = BTreeMap::new();
    for p in &background {
        for g in ngrams(&p.answer, cfg.max_n) {
            if df_target.contains_key(&g) {
                *df_background.entry(g).or_default() += 1;
            }
        }
    }

    let n_target = related.len() as f64;
    let n_background = background.len() as f64;
    let stop = |id: TokenId| vocab.is_reserved(id) || cfg.stoplist.contains(vocab.surface(id));
    let mut out: Vec<Candidate> = df_target
        .into_iter()
        .filter(|(g, count)| {
            *g != name
                && *count >= cfg.min_count
                && !stop(g[0])
                && !stop(g[g.len() - 1])
                && !g.contains(&vocab.unk())
        })
        .filter_map(|(g, count)| {
            let surface = vocab.decode(&g);
            if surface.chars().count() < cfg.min_chars {
                return None;
            }
            let bg = df_background.get(&g).copied().unwrap_or(0) as f64;
            let idf = ((1.0 + n_background) / (1.0 + bg)).ln() + 1.0;
            Some(Candidate {
                phrase: g,
                surface,
                score: count as f64 / n_target * idf,
            })
        })
        .collect();
    if cfg.include_target_name {
        // The bare name is pinned to the top score so it always survives selection.
        let top = out.iter().map(|c| c.score).fold(0.0, f64::max);
        out.retain(|c| c.phrase != name);
        out.push(Candidate {
            surface: vocab.decode(&name),
            phrase: name,
            score: top,
        });
    }
    out.sort_by(rank);
    Ok(out)
}

/// Keeps the `k` best candidates in ranking order.
pub fn select_topk(target: &str, candidates: &[Candidate], k: usize) -> Result<ForgetCorpus> {
    if k == 0 {
        return Err(Error::EmptySelection);
    }
    let mut ranked = candidates.to_vec();
    ranked.sort_by(rank);
    ranked.dedup_by(|a, b| a.phrase == b.phrase);
    ranked.truncate(k);
    Ok(ForgetCorpus {
        target: target.to_string(),
        phrases: ranked.iter().map(|c| c.phrase.clone()).collect(),
        scores: ranked.iter().map(|c| c.score).collect(),
        k,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCount {
    pub total: usize,
    pub per_phrase: Vec<usize>,
}

pub fn count_corpus_tokens(corpus: &ForgetCorpus) -> TokenCount {
    let per_phrase: Vec<usize> = corpus.phrases.iter().map(Vec::len).collect();
    TokenCount {
        total: per_phrase.iter().sum(),
        per_phrase,
    }
}
