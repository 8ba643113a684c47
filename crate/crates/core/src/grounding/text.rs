use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::GroundingError;

pub const OOV_TOKEN: &str = "<oov>";

/// Free-form user instruction, non-empty after trimming.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction(String);

impl Instruction {
    pub fn new(text: &str) -> Result<Self, GroundingError> {
        let t = text.trim();
        if t.is_empty() {
            return Err(GroundingError::EmptyInstruction);
        }
        Ok(Self(t.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// Lowercased words; anything other than alphanumerics and `_` separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Text fed to the grounder for one step of a routed skill sequence.
pub fn with_skill_context(instruction: &str, skill: &str) -> String {
    format!("{instruction} skill_{skill}")
}

/// Adjacent word pairs joined by a space.
pub fn bigrams(tokens: &[String]) -> Vec<String> {
    tokens
        .windows(2)
        .map(|w| format!("{} {}", w[0], w[1]))
        .collect()
}

/// Sorted term list; index 0 is reserved for unknown words. With `bigrams`
/// set, word pairs seen at build time are extra terms so that modifiers stay
/// bound to their noun; unseen pairs are dropped rather than mapped to 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    words: Vec<String>,
    #[serde(default)]
    bigrams: bool,
}

impl Vocabulary {
    pub fn build<'a, I: IntoIterator<Item = &'a str>>(texts: I) -> Self {
        Self::assemble(texts, false)
    }

    pub fn with_bigrams<'a, I: IntoIterator<Item = &'a str>>(texts: I) -> Self {
        Self::assemble(texts, true)
    }

    fn assemble<'a, I: IntoIterator<Item = &'a str>>(texts: I, pairs: bool) -> Self {
        let mut set = BTreeSet::new();
        for text in texts {
            let tokens = tokenize(text);
            if pairs {
                set.extend(bigrams(&tokens));
            }
            set.extend(tokens);
        }
        let mut words = vec![OOV_TOKEN.to_string()];
        words.extend(set);
        Self {
            words,
            bigrams: pairs,
        }
    }

    pub fn from_words(words: Vec<String>) -> Self {
        Self {
            words,
            bigrams: false,
        }
    }

    pub fn has_bigrams(&self) -> bool {
        self.bigrams
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn index(&self, word: &str) -> usize {
        self.words[1..]
            .binary_search_by(|w| w.as_str().cmp(word))
            .map(|i| i + 1)
            .unwrap_or(0)
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        let tokens = tokenize(text);
        let mut out: Vec<usize> = tokens.iter().map(|t| self.index(t)).collect();
        if self.bigrams {
            out.extend(
                bigrams(&tokens)
                    .iter()
                    .map(|b| self.index(b))
                    .filter(|&i| i > 0),
            );
        }
        out
    }
}
