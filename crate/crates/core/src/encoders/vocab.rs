use std::collections::HashMap;

use super::fnv1a64;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
/// Placeholder substituted for the topic-entity mention.
pub const ENTITY_TOKEN: &str = "<e>";

/// Bijective token/index mapping with reserved `<pad>`, `<unk>` and `<e>`
/// at indices 0, 1 and 2.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Vocabulary {
            index: HashMap::new(),
            tokens: Vec::new(),
        };
        for t in [PAD_TOKEN, UNK_TOKEN, ENTITY_TOKEN] {
            v.add(t);
        }
        v
    }

    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Vocabulary::new();
        for t in tokens {
            v.add(t.as_ref());
        }
        v
    }

    /// Returns the index of `token`, assigning the next free one if new.
    pub fn add(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.tokens.len();
        self.index.insert(token.to_string(), i);
        self.tokens.push(token.to_string());
        i
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Index of `token`, falling back to `<unk>`.
    pub fn lookup(&self, token: &str) -> usize {
        self.get(token).unwrap_or(1)
    }

    pub fn unk(&self) -> usize {
        1
    }

    pub fn entity(&self) -> usize {
        2
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Order-sensitive hash of the token list, rendered as 16 hex digits.
    pub fn fingerprint(&self) -> String {
        let joined = self.tokens.join("\n");
        format!("{:016x}", fnv1a64(0, joined.as_bytes()))
    }
}
