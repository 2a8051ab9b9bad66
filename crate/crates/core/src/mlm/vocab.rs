use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = usize;

pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";
pub const CLS_TOKEN: &str = "[CLS]";
pub const MASK_TOKEN: &str = "[MASK]";

pub const PAD_ID: TokenId = 0;
pub const UNK_ID: TokenId = 1;
pub const CLS_ID: TokenId = 2;
pub const MASK_ID: TokenId = 3;

const SPECIALS: [&str; 4] = [PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, MASK_TOKEN];

/// What a verbalizer needs from a scorer's vocabulary.
pub trait TokenVocab {
    fn size(&self) -> usize;

    fn token(&self, id: TokenId) -> Option<&str>;

    fn mask_token(&self) -> &str;

    /// Id of `word` if it tokenizes to exactly one known token.
    fn single_token_id(&self, word: &str) -> Option<TokenId>;

    /// FNV-1a over the token strings in id order.
    fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for id in 0..self.size() {
            for b in self.token(id).unwrap_or("").bytes().chain(std::iter::once(0xff)) {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// Whitespace + lowercase vocabulary with reserved specials at ids 0..4.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Vocabulary::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Vocabulary(format!(
                "vocabulary must start with the special tokens {SPECIALS:?}"
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Vocabulary(format!("duplicate token `{t}`")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    /// Learns a vocabulary from `texts`. Words seen fewer than `min_count`
    /// times are dropped unless listed in `extra`, which is always included.
    /// Ordering is by descending count, then lexicographic.
    pub fn build<'a, I>(texts: I, extra: &[&str], min_count: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            for w in split_words(text) {
                if w == MASK_TOKEN {
                    continue;
                }
                *counts.entry(w.to_lowercase()).or_default() += 1;
            }
        }
        for w in extra {
            for piece in split_words(w) {
                let c = counts.entry(piece.to_lowercase()).or_default();
                *c = (*c).max(min_count);
            }
        }
        let mut words: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(w, c)| *c >= min_count && !SPECIALS.contains(&w.as_str()))
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(words.into_iter().map(|(w, _)| w))
            .collect();
        Vocabulary::from_tokens(tokens).expect("specials are well-formed")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Maps one whitespace piece to an id; the literal mask token is kept
    /// case-sensitive so it can never be confused with a word.
    pub fn piece_id(&self, piece: &str) -> TokenId {
        if piece == MASK_TOKEN {
            return MASK_ID;
        }
        self.id(&piece.to_lowercase()).unwrap_or(UNK_ID)
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        split_words(text).map(|p| self.piece_id(p)).collect()
    }
}

impl TokenVocab for Vocabulary {
    fn size(&self) -> usize {
        self.tokens.len()
    }

    fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    fn mask_token(&self) -> &str {
        MASK_TOKEN
    }

    fn single_token_id(&self, word: &str) -> Option<TokenId> {
        let mut pieces = split_words(word);
        let first = pieces.next()?;
        if pieces.next().is_some() {
            return None;
        }
        match self.piece_id(first) {
            id if id < SPECIALS.len() => None,
            id => Some(id),
        }
    }
}

pub fn split_words(text: &str) -> std::str::SplitWhitespace<'_> {
    text.split_whitespace()
}
