use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::EncoderError;
use crate::corpus::Utterance;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const MASK: usize = 2;
pub const CLS: usize = 3;
pub const SPECIALS: [&str; 4] = ["[PAD]", "[UNK]", "[MASK]", "[CLS]"];

/// Dense token ids; the four special tokens occupy ids 0..4.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = EncoderError;

    fn try_from(tokens: Vec<String>) -> Result<Self, Self::Error> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(EncoderError::Vocabulary("special tokens missing".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(EncoderError::Vocabulary(format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Keeps the `max_size - 4` most frequent tokens; equal counts are
    /// ordered lexicographically.
    pub fn build(corpus: &[Utterance], max_size: usize) -> Result<Self, EncoderError> {
        if max_size < SPECIALS.len() {
            return Err(EncoderError::Vocabulary(format!(
                "max size {max_size} is smaller than the {} special tokens",
                SPECIALS.len()
            )));
        }
        if corpus.is_empty() {
            return Err(EncoderError::Vocabulary("empty corpus".into()));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in corpus.iter().flat_map(|u| &u.tokens) {
            *counts.entry(t.text.as_str()).or_default() += 1;
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(w, _)| !SPECIALS.contains(w))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens: Vec<String> = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().take(max_size - SPECIALS.len()).map(|(w, _)| w.to_owned()))
            .collect();
        Vocabulary::try_from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn encode(&self, words: &[&str]) -> Vec<usize> {
        words.iter().map(|w| self.id(w)).collect()
    }

    /// Fraction of corpus tokens that map to a non-UNK id.
    pub fn coverage(&self, corpus: &[Utterance]) -> f64 {
        let (mut known, mut total) = (0usize, 0usize);
        for t in corpus.iter().flat_map(|u| &u.tokens) {
            total += 1;
            known += usize::from(self.contains(&t.text));
        }
        if total == 0 {
            0.0
        } else {
            known as f64 / total as f64
        }
    }
}
