use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense token id.
pub type TokenId = u32;

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

/// Case-folds a surface word and strips everything that is not alphanumeric.
pub fn fold(word: &str) -> String {
    word.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Whitespace split, case fold and punctuation strip. Words that fold to
/// nothing (pure punctuation) are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(fold)
        .filter(|w| !w.is_empty())
        .collect()
}

/// Token inventory with reserved `<bos>`, `<eos>` and `<unk>` markers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    bos: TokenId,
    eos: TokenId,
    unk: TokenId,
}

impl Vocabulary {
    /// Builds a vocabulary from raw texts. Words are assigned ids in order of
    /// first appearance; the three reserved markers are appended last.
    pub fn build<S: AsRef<str>>(texts: &[S]) -> Result<Self> {
        let mut tokens: Vec<String> = Vec::new();
        let mut index = HashMap::new();
        for text in texts {
            for word in tokenize(text.as_ref()) {
                if !index.contains_key(&word) {
                    index.insert(word.clone(), tokens.len() as TokenId);
                    tokens.push(word);
                }
            }
        }
        if tokens.is_empty() {
            return Err(Error::NoCorpus);
        }
        tokens.extend([BOS, EOS, UNK].map(String::from));
        Self::from_tokens(tokens)
    }

    /// Rebuilds a vocabulary from its ordered token list (checkpoint loading).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), id as TokenId).is_some() {
                return Err(Error::Format(format!("duplicate token {tok:?}")));
            }
        }
        let marker = |m: &str| {
            index
                .get(m)
                .copied()
                .ok_or_else(|| Error::Format(format!("missing reserved marker {m}")))
        };
        Ok(Self {
            bos: marker(BOS)?,
            eos: marker(EOS)?,
            unk: marker(UNK)?,
            tokens,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn bos(&self) -> TokenId {
        self.bos
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn unk(&self) -> TokenId {
        self.unk
    }

    pub fn is_reserved(&self, id: TokenId) -> bool {
        id == self.bos || id == self.eos || id == self.unk
    }

    /// Id of an already-folded word, if present.
    pub fn lookup(&self, word: &str) -> Option<TokenId> {
        self.index.get(word).copied()
    }

    pub fn surface(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Tokenizes `text`, mapping unknown words to `<unk>`.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        tokenize(text)
            .iter()
            .map(|w| self.lookup(w).unwrap_or(self.unk))
            .collect()
    }

    /// Tokenizes `text`, failing on the first unknown word.
    pub fn encode_strict(&self, text: &str) -> Result<Vec<TokenId>> {
        tokenize(text)
            .into_iter()
            .map(|w| self.lookup(&w).ok_or(Error::OutOfVocabulary(w)))
            .collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&id| self.surface(id))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Ids of ordinary (non-reserved) words.
    pub fn word_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        (0..self.len() as TokenId).filter(move |&id| !self.is_reserved(id))
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Self::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(vocab: Vocabulary) -> Self {
        vocab.tokens
    }
}
