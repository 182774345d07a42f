use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_TRIGRAM_BUCKETS: usize = 15_000;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a, with `seed` mixed into the offset basis.
pub(crate) fn fnv1a64(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ seed;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Word hashing of character trigrams into a fixed number of buckets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrigramHasher {
    buckets: usize,
    seed: u64,
}

/// Sparse trigram counts over `buckets` dimensions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrigramCounts {
    buckets: usize,
    counts: BTreeMap<usize, u32>,
}

impl TrigramCounts {
    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn get(&self, bucket: usize) -> u32 {
        self.counts.get(&bucket).copied().unwrap_or(0)
    }

    pub fn nonzero(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.counts.iter().map(|(&b, &c)| (b, c))
    }

    pub fn total(&self) -> u32 {
        self.counts.values().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.buckets];
        for (&b, &c) in &self.counts {
            v[b] = f64::from(c);
        }
        v
    }
}

impl Default for TrigramHasher {
    fn default() -> Self {
        TrigramHasher {
            buckets: DEFAULT_TRIGRAM_BUCKETS,
            seed: 0,
        }
    }
}

impl TrigramHasher {
    pub fn new(buckets: usize, seed: u64) -> Result<Self> {
        if buckets == 0 {
            return Err(Error::Config("trigram bucket count must be positive".into()));
        }
        Ok(TrigramHasher { buckets, seed })
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bucket(&self, trigram: &str) -> usize {
        (fnv1a64(self.seed, trigram.as_bytes()) % self.buckets as u64) as usize
    }

    /// Character trigrams of `#word#`.
    pub fn word_trigrams(word: &str) -> Vec<String> {
        let chars: Vec<char> = std::iter::once('#')
            .chain(word.chars())
            .chain(std::iter::once('#'))
            .collect();
        chars.windows(3).map(|w| w.iter().collect()).collect()
    }

    /// Counts over every word of `text` (whitespace separated).
    pub fn featurize(&self, text: &str) -> TrigramCounts {
        let mut counts = BTreeMap::new();
        for word in text.split_whitespace() {
            for tri in Self::word_trigrams(word) {
                *counts.entry(self.bucket(&tri)).or_insert(0) += 1;
            }
        }
        TrigramCounts {
            buckets: self.buckets,
            counts,
        }
    }

    /// One dense row of trigram counts per token: a `T×B` matrix.
    pub fn word_matrix(&self, tokens: &[String]) -> Result<Tensor> {
        if tokens.is_empty() {
            return Err(Error::Domain("no words to featurize".into()));
        }
        let mut values = Vec::with_capacity(tokens.len() * self.buckets);
        for t in tokens {
            values.extend(self.featurize(t).to_dense());
        }
        Tensor::new(vec![tokens.len(), self.buckets], values)
    }
}
