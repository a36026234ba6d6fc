//! Multi-pattern matching of forbidden phrases over token ids, and the binary
//! reward built on it: a completion earns 1 exactly when it contains none of
//! the forget-corpus phrases.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::corpus::{ForgetCorpus, TokenId, Vocabulary};
use crate::error::{Error, Result};

/// How a phrase "occurs" in a text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// The phrase appears as a contiguous run of tokens.
    #[default]
    Contiguous,
    /// Every token of the phrase appears somewhere, in any order.
    Bag,
}

/// A located occurrence: `phrase` indexes the deduplicated phrase list,
/// `start..end` is the token span.
///
/// Contiguous mode reports the occurrence that ends earliest, preferring the
/// longest phrase among those ending at the same position. Bag mode reports
/// the shortest prefix that contains every token of some phrase, with the
/// span running from the first occurrence of that phrase's earliest token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForbiddenMatch {
    pub phrase: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Default)]
struct State {
    next: BTreeMap<TokenId, usize>,
    fail: usize,
    terminal: bool,
    /// Longest phrase (index, length) ending at this state, following output links.
    output: Option<(usize, usize)>,
}

/// Aho–Corasick automaton over token ids (contiguous mode) or a token-count
/// index (bag mode).
#[derive(Debug, Clone)]
pub struct PhraseAutomaton {
    mode: MatchMode,
    phrases: Vec<Vec<TokenId>>,
    states: Vec<State>,
    /// Bag mode: phrases containing each token, and each phrase's distinct-token count.
    by_token: BTreeMap<TokenId, Vec<usize>>,
    distinct: Vec<usize>,
}

impl PhraseAutomaton {
    /// Compiles a phrase set. Duplicates are dropped (first occurrence wins);
    /// empty phrases and phrases containing `unk` are rejected.
    pub fn compile(phrases: &[Vec<TokenId>], mode: MatchMode, unk: TokenId) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut unique = Vec::new();
        for phrase in phrases {
            if phrase.is_empty() {
                return Err(Error::InvalidInput("empty phrase".into()));
            }
            if phrase.contains(&unk) {
                return Err(Error::UnmatchablePhrase(phrase.clone()));
            }
            if seen.insert(phrase.clone()) {
                unique.push(phrase.clone());
            }
        }
        let mut automaton = Self {
            mode,
            phrases: unique,
            states: vec![State::default()],
            by_token: BTreeMap::new(),
            distinct: Vec::new(),
        };
        match mode {
            MatchMode::Contiguous => automaton.build_trie(),
            MatchMode::Bag => automaton.build_bag_index(),
        }
        Ok(automaton)
    }

    pub fn from_corpus(corpus: &ForgetCorpus, vocab: &Vocabulary, mode: MatchMode) -> Result<Self> {
        Self::compile(&corpus.phrases, mode, vocab.unk())
    }

    fn build_trie(&mut self) {
        for (idx, phrase) in self.phrases.iter().enumerate() {
            let mut s = 0;
            for &tok in phrase {
                s = match self.states[s].next.get(&tok) {
                    Some(&n) => n,
                    None => {
                        self.states.push(State::default());
                        let n = self.states.len() - 1;
                        self.states[s].next.insert(tok, n);
                        n
                    }
                };
            }
            self.states[s].terminal = true;
            self.states[s].output = Some((idx, phrase.len()));
        }
        // Breadth-first failure links; outputs inherit the longer of own and fail-state output.
        let mut queue: VecDeque<usize> = self.states[0].next.values().copied().collect();
        while let Some(s) = queue.pop_front() {
            let edges: Vec<(TokenId, usize)> =
                self.states[s].next.iter().map(|(&t, &n)| (t, n)).collect();
            for (tok, child) in edges {
                let mut f = self.states[s].fail;
                let fail = loop {
                    if let Some(&n) = self.states[f].next.get(&tok) {
                        if n != child {
                            break n;
                        }
                    }
                    if f == 0 {
                        break 0;
                    }
                    f = self.states[f].fail;
                };
                self.states[child].fail = fail;
                if self.states[child].output.is_none() {
                    self.states[child].output = self.states[fail].output;
                }
                queue.push_back(child);
            }
        }
    }

    fn build_bag_index(&mut self) {
        for (idx, phrase) in self.phrases.iter().enumerate() {
            let set: BTreeSet<TokenId> = phrase.iter().copied().collect();
            for &tok in &set {
                self.by_token.entry(tok).or_default().push(idx);
            }
            self.distinct.push(set.len());
        }
    }

    pub fn mode(&self) -> MatchMode {
        self.mode
    }

    pub fn phrases(&self) -> &[Vec<TokenId>] {
        &self.phrases
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    /// Number of accepting states (contiguous) or phrases (bag).
    pub fn accept_states(&self) -> usize {
        match self.mode {
            MatchMode::Contiguous => self.states.iter().filter(|s| s.terminal).count(),
            MatchMode::Bag => self.phrases.len(),
        }
    }

    fn step(&self, mut s: usize, tok: TokenId) -> usize {
        loop {
            if let Some(&n) = self.states[s].next.get(&tok) {
                return n;
            }
            if s == 0 {
                return 0;
            }
            s = self.states[s].fail;
        }
    }

    /// First forbidden occurrence in `tokens`, if any.
    pub fn find_forbidden(&self, tokens: &[TokenId]) -> Option<ForbiddenMatch> {
        if self.phrases.is_empty() {
            return None;
        }
        match self.mode {
            MatchMode::Contiguous => {
                let mut s = 0;
                for (i, &tok) in tokens.iter().enumerate() {
                    s = self.step(s, tok);
                    if let Some((phrase, len)) = self.states[s].output {
                        return Some(ForbiddenMatch {
                            phrase,
                            start: i + 1 - len,
                            end: i + 1,
                        });
                    }
                }
                None
            }
            MatchMode::Bag => {
                let mut first_seen: BTreeMap<TokenId, usize> = BTreeMap::new();
                let mut hits = vec![0usize; self.phrases.len()];
                for (i, &tok) in tokens.iter().enumerate() {
                    if first_seen.contains_key(&tok) {
                        continue;
                    }
                    first_seen.insert(tok, i);
                    let Some(owners) = self.by_token.get(&tok) else {
                        continue;
                    };
                    let mut done: Option<usize> = None;
                    for &p in owners {
                        hits[p] += 1;
                        if hits[p] == self.distinct[p] && done.is_none() {
                            done = Some(p);
                        }
                    }
                    if let Some(phrase) = done {
                        let start = self.phrases[phrase]
                            .iter()
                            .map(|t| first_seen[t])
                            .min()
                            .unwrap_or(i);
                        return Some(ForbiddenMatch {
                            phrase,
                            start,
                            end: i + 1,
                        });
                    }
                }
                None
            }
        }
    }

    pub fn contains_forbidden(&self, tokens: &[TokenId]) -> bool {
        self.find_forbidden(tokens).is_some()
    }

    /// φ(ŷ) ∈ {0, 1}: 1 when no forbidden phrase occurs.
    pub fn reward(&self, tokens: &[TokenId]) -> f64 {
        if self.contains_forbidden(tokens) {
            0.0
        } else {
            1.0
        }
    }
}

/// Reference implementation: checks every phrase at every position.
pub fn naive_find(
    phrases: &[Vec<TokenId>],
    tokens: &[TokenId],
    mode: MatchMode,
) -> Option<(usize, usize)> {
    match mode {
        MatchMode::Contiguous => {
            for end in 1..=tokens.len() {
                let best = phrases
                    .iter()
                    .filter(|p| p.len() <= end && tokens[end - p.len()..end] == p[..])
                    .map(Vec::len)
                    .max();
                if let Some(len) = best {
                    return Some((end - len, end));
                }
            }
            None
        }
        MatchMode::Bag => {
            for end in 1..=tokens.len() {
                let prefix = &tokens[..end];
                for p in phrases {
                    if p.iter().all(|t| prefix.contains(t)) {
                        let start = p
                            .iter()
                            .map(|t| prefix.iter().position(|x| x == t).unwrap())
                            .min()
                            .unwrap();
                        return Some((start, end));
                    }
                }
            }
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const UNK: TokenId = 999;

    fn worked_example() -> (Vocabulary, PhraseAutomaton) {
        let vocab = Vocabulary::build(&["apple rich man"]).unwrap();
        let phrases = vec![vocab.encode("apple"), vocab.encode("rich man")];
        let a = PhraseAutomaton::compile(&phrases, MatchMode::Contiguous, vocab.unk()).unwrap();
        (vocab, a)
    }

    #[test]
    fn worked_example_rewards() {
        let (v, a) = worked_example();
        assert_eq!(a.accept_states(), 2);
        let m = a.find_forbidden(&v.encode("rich man")).unwrap();
        assert_eq!((m.start, m.end), (0, 2));
        assert_eq!(a.reward(&v.encode("rich man")), 0.0);
        assert_eq!(a.reward(&v.encode("man")), 1.0);
        assert_eq!(a.reward(&[]), 1.0);
    }

    #[test]
    fn empty_phrase_list_accepts_nothing() {
        let a = PhraseAutomaton::compile(&[], MatchMode::Contiguous, UNK).unwrap();
        assert!(a.find_forbidden(&[1, 2, 3]).is_none());
        let b = PhraseAutomaton::compile(&[], MatchMode::Bag, UNK).unwrap();
        assert!(b.find_forbidden(&[1, 2, 3]).is_none());
    }

    #[test]
    fn unk_phrase_is_unmatchable() {
        let err = PhraseAutomaton::compile(&[vec![1, UNK]], MatchMode::Contiguous, UNK);
        assert!(matches!(err, Err(Error::UnmatchablePhrase(_))));
    }

    #[test]
    fn duplicates_are_dropped() {
        let a = PhraseAutomaton::compile(&[vec![1, 2], vec![1, 2], vec![3]], MatchMode::Contiguous, UNK)
            .unwrap();
        assert_eq!(a.phrases().len(), 2);
    }

    #[test]
    fn overlapping_patterns_use_failure_links() {
        let a = PhraseAutomaton::compile(&[vec![1, 2, 3, 4], vec![2, 3], vec![3, 4, 5]], MatchMode::Contiguous, UNK)
            .unwrap();
        let m = a.find_forbidden(&[1, 2, 3, 9]).unwrap();
        assert_eq!((m.start, m.end), (1, 3));
        let m = a.find_forbidden(&[1, 2, 7, 3, 4, 5]).unwrap();
        assert_eq!((m.start, m.end), (3, 6));
    }

    #[test]
    fn bag_mode_ignores_order_and_gaps() {
        let a = PhraseAutomaton::compile(&[vec![1, 2]], MatchMode::Bag, UNK).unwrap();
        let m = a.find_forbidden(&[2, 7, 7, 1]).unwrap();
        assert_eq!((m.start, m.end), (0, 4));
        assert!(a.find_forbidden(&[2, 2, 3]).is_none());
    }

    fn random_phrases(rng: &mut ChaCha8Rng, n: usize, alphabet: u32) -> Vec<Vec<TokenId>> {
        (0..n)
            .map(|_| {
                let len = rng.random_range(1..=3);
                (0..len).map(|_| rng.random_range(0..alphabet)).collect()
            })
            .collect()
    }

    #[test]
    fn hundred_phrases_agree_with_naive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let phrases = random_phrases(&mut rng, 100, 40);
        for mode in [MatchMode::Contiguous, MatchMode::Bag] {
            let a = PhraseAutomaton::compile(&phrases, mode, UNK).unwrap();
            for _ in 0..10_000 {
                let len = rng.random_range(0..12);
                let text: Vec<TokenId> = (0..len).map(|_| rng.random_range(0..40)).collect();
                let got = a.find_forbidden(&text).map(|m| (m.start, m.end));
                assert_eq!(got, naive_find(a.phrases(), &text, mode), "{mode:?} {text:?}");
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn adding_a_phrase_never_restores_reward(
            phrases in proptest::collection::vec(proptest::collection::vec(0u32..6, 1..4), 0..8),
            extra in proptest::collection::vec(0u32..6, 1..4),
            text in proptest::collection::vec(0u32..6, 0..15),
        ) {
            for mode in [MatchMode::Contiguous, MatchMode::Bag] {
                let before = PhraseAutomaton::compile(&phrases, mode, UNK).unwrap().reward(&text);
                let mut more = phrases.clone();
                more.push(extra.clone());
                let after = PhraseAutomaton::compile(&more, mode, UNK).unwrap().reward(&text);
                proptest::prop_assert!(after <= before);
                proptest::prop_assert!(after == 0.0 || after == 1.0);
            }
        }
    }
}
