//! Hashed word and character n-gram counts.
//!
//! Each n-gram is hashed with 64-bit FNV-1a whose start state is
//! `hash_seed` (the default seed is the standard FNV offset basis). The
//! hashed bytes are a kind tag (`b'w'` for word n-grams, `b'c'` for character
//! n-grams) followed by the UTF-8 n-gram; word n-grams join their tokens with a
//! single space. The bucket is the hash masked to `dim - 1`.
//!
//! Words are whitespace-separated tokens, case preserved. Character n-grams
//! slide over the unicode scalar values of the whole text, spaces included.

use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramRange {
    pub min: usize,
    pub max: usize,
}

impl NgramRange {
    pub const fn new(min: usize, max: usize) -> Self {
        NgramRange { min, max }
    }
}

mod hex_u64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:#018x}"))
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(u64),
        Str(String),
    }

    /// Accepts an integer, a decimal string or a `0x` hex string.
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => Ok(v),
            Repr::Str(s) => {
                let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
                    Some(hex) => u64::from_str_radix(hex, 16),
                    None => s.parse(),
                };
                parsed.map_err(|_| de::Error::custom(format!("bad hash seed {s:?}")))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub dim: usize,
    pub word_ngrams: NgramRange,
    pub char_ngrams: NgramRange,
    /// Written as a hex string: the default does not fit a TOML integer.
    #[serde(with = "hex_u64")]
    pub hash_seed: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            dim: 1 << 18,
            word_ngrams: NgramRange::new(1, 2),
            char_ngrams: NgramRange::new(3, 5),
            hash_seed: FNV_OFFSET_BASIS,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 || !self.dim.is_power_of_two() || self.dim > u32::MAX as usize + 1 {
            return Err(Error::Config(format!(
                "feature dim {} must be a power of two in [2, 2^32]",
                self.dim
            )));
        }
        for (name, r) in [("word", self.word_ngrams), ("char", self.char_ngrams)] {
            if r.min == 0 || r.min > r.max {
                return Err(Error::Config(format!(
                    "{name} n-gram range {}..={} is empty",
                    r.min, r.max
                )));
            }
        }
        Ok(())
    }

    fn bucket(&self, kind: u8, ngram: &[u8]) -> u32 {
        let mut h = FnvHasher::with_key(self.hash_seed);
        h.write(&[kind]);
        h.write(ngram);
        (h.finish() & (self.dim as u64 - 1)) as u32
    }

    pub fn word_bucket(&self, ngram: &str) -> u32 {
        self.bucket(b'w', ngram.as_bytes())
    }

    pub fn char_bucket(&self, ngram: &str) -> u32 {
        self.bucket(b'c', ngram.as_bytes())
    }
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn from_buckets(mut buckets: Vec<u32>) -> Self {
        buckets.sort_unstable();
        let mut v = SparseVector::default();
        for b in buckets {
            if v.indices.last() == Some(&b) {
                *v.values.last_mut().unwrap() += 1.0;
            } else {
                v.indices.push(b);
                v.values.push(1.0);
            }
        }
        v
    }

    pub fn get(&self, index: u32) -> f64 {
        self.indices
            .binary_search(&index)
            .map(|i| self.values[i])
            .unwrap_or(0.0)
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .map(|&i| i as usize)
            .zip(self.values.iter().copied())
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| dense[i] * v).sum()
    }
}

pub fn featurize(text: &str, cfg: &FeatureConfig) -> SparseVector {
    let mut buckets = Vec::new();

    let words: Vec<&str> = text.split_whitespace().collect();
    let mut joined = String::new();
    for n in cfg.word_ngrams.min..=cfg.word_ngrams.max {
        for window in words.windows(n) {
            joined.clear();
            for (i, w) in window.iter().enumerate() {
                if i > 0 {
                    joined.push(' ');
                }
                joined.push_str(w);
            }
            buckets.push(cfg.word_bucket(&joined));
        }
    }

    // byte offsets of every char boundary, so char windows are plain slices
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    let n_chars = bounds.len() - 1;
    for n in cfg.char_ngrams.min..=cfg.char_ngrams.max {
        if n > n_chars {
            break;
        }
        for start in 0..=n_chars - n {
            buckets.push(cfg.char_bucket(&text[bounds[start]..bounds[start + n]]));
        }
    }

    SparseVector::from_buckets(buckets)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// FNV-1a written out longhand, independent of the `fnv` crate.
    fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
        let mut h = seed;
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    #[test]
    fn empty_text_is_zero() {
        assert!(featurize("", &FeatureConfig::default()).is_empty());
    }

    #[test]
    fn deterministic() {
        let cfg = FeatureConfig::default();
        assert_eq!(
            featurize("same text #here", &cfg),
            featurize("same text #here", &cfg)
        );
    }

    #[test]
    fn repeated_unigram_counts_twice() {
        let cfg = FeatureConfig {
            char_ngrams: NgramRange::new(9, 9),
            word_ngrams: NgramRange::new(1, 1),
            ..Default::default()
        };
        let bucket = (fnv1a(FNV_OFFSET_BASIS, b"wab") & (cfg.dim as u64 - 1)) as u32;
        assert_eq!(cfg.word_bucket("ab"), bucket);
        let v = featurize("ab ab", &cfg);
        assert_eq!(v.get(bucket), 2.0);
        assert_eq!(v.nnz(), 1);
    }

    #[test]
    fn ngram_totals() {
        let cfg = FeatureConfig::default();
        // 3 words -> 3 unigrams + 2 bigrams; 8 chars -> 6 + 5 + 4 char grams
        let v = featurize("ab cd ef", &cfg);
        let total: f64 = v.values.iter().sum();
        assert_eq!(total, 5.0 + 15.0);
        assert!(v.indices.windows(2).all(|w| w[0] < w[1]));
        // multibyte text slices on char boundaries
        let v = featurize("日本語のテキスト", &cfg);
        assert_eq!(v.values.iter().sum::<f64>(), 1.0 + 15.0);
    }

    #[test]
    fn seed_changes_buckets() {
        let a = FeatureConfig::default();
        let b = FeatureConfig { hash_seed: 7, ..a };
        assert_ne!(featurize("hello world", &a), featurize("hello world", &b));
    }

    #[test]
    fn config_validation() {
        assert!(FeatureConfig::default().validate().is_ok());
        assert!(FeatureConfig {
            dim: 12,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(FeatureConfig {
            dim: 1,
            ..Default::default()
        }
        .validate()
        .is_err());
        let empty = FeatureConfig {
            char_ngrams: NgramRange::new(4, 3),
            ..Default::default()
        };
        assert!(empty.validate().is_err());
    }
}
