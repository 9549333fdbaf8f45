//! Synthetic multilingual regression task with a hidden linear scorer.
//!
//! Every language gets its own random vocabulary; every word a hidden weight.
//! A text's score is `3 + offset[lang] + scale * sum(weights) / sqrt(words)`
//! plus Gaussian noise, clamped to `[1, 5]`. Some texts carry user handles
//! and URLs that the scorer ignores.

use std::collections::{HashMap, HashSet};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Example, DEFAULT_LANGUAGES, MAX_SCORE, MIN_SCORE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub languages: Vec<String>,
    /// Relative sampling frequency of each language.
    pub language_weights: Vec<f64>,
    pub vocab_per_language: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub signal_scale: f64,
    pub language_offset_std: f64,
    pub noise_std: f64,
    pub mention_rate: f64,
    pub url_rate: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 0,
            languages: DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect(),
            // pre-training corpus shares, in millions of tweets
            language_weights: vec![79.4, 22.4, 16.3, 2.5, 6.6, 4.0, 2.7, 1.1, 8.3, 12.9],
            vocab_per_language: 200,
            min_words: 6,
            max_words: 14,
            signal_scale: 0.8,
            language_offset_std: 0.2,
            noise_std: 0.3,
            mention_rate: 0.2,
            url_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTask {
    cfg: SyntheticConfig,
    vocab: Vec<Vec<String>>,
    weights: HashMap<String, f64>,
    offsets: HashMap<String, f64>,
}

const LETTERS: &[u8] = b"abcdefghijklmnopqrstuvwxyz";

impl SyntheticTask {
    pub fn new(cfg: SyntheticConfig) -> Self {
        assert_eq!(cfg.languages.len(), cfg.language_weights.len());
        assert!(cfg.min_words >= 1 && cfg.min_words <= cfg.max_words);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let unit = Normal::new(0.0, 1.0).unwrap();
        let mut seen = HashSet::new();
        let mut vocab = Vec::with_capacity(cfg.languages.len());
        let mut weights = HashMap::new();
        let mut offsets = HashMap::new();
        for lang in &cfg.languages {
            offsets.insert(
                lang.clone(),
                cfg.language_offset_std * unit.sample(&mut rng),
            );
            let mut words = Vec::with_capacity(cfg.vocab_per_language);
            while words.len() < cfg.vocab_per_language {
                let len = rng.random_range(3..=8);
                let w: String = (0..len)
                    .map(|_| LETTERS[rng.random_range(0..LETTERS.len())] as char)
                    .collect();
                if seen.insert(w.clone()) {
                    weights.insert(w.clone(), unit.sample(&mut rng));
                    words.push(w);
                }
            }
            vocab.push(words);
        }
        SyntheticTask {
            cfg,
            vocab,
            weights,
            offsets,
        }
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.cfg
    }

    /// Noise-free score of a text (handles, URLs and unknown words ignored).
    pub fn clean_score(&self, language: &str, text: &str) -> f64 {
        let words: Vec<f64> = text
            .split_whitespace()
            .filter_map(|w| self.weights.get(w).copied())
            .collect();
        let signal = if words.is_empty() {
            0.0
        } else {
            words.iter().sum::<f64>() / (words.len() as f64).sqrt()
        };
        3.0 + self.offsets.get(language).copied().unwrap_or(0.0) + self.cfg.signal_scale * signal
    }

    fn sample(&self, n: usize, prefix: &str, stream_seed: u64, labeled: bool) -> Dataset {
        let mut rng =
            ChaCha8Rng::seed_from_u64(self.cfg.seed ^ stream_seed.rotate_left(17) ^ 0x5eed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let total_weight: f64 = self.cfg.language_weights.iter().sum();
        let mut examples = Vec::with_capacity(n);
        for i in 0..n {
            let mut pick = rng.random::<f64>() * total_weight;
            let mut li = 0;
            while li + 1 < self.cfg.languages.len() && pick >= self.cfg.language_weights[li] {
                pick -= self.cfg.language_weights[li];
                li += 1;
            }
            let lang = &self.cfg.languages[li];
            let n_words = rng.random_range(self.cfg.min_words..=self.cfg.max_words);
            let mut tokens: Vec<String> = (0..n_words)
                .map(|_| self.vocab[li][rng.random_range(0..self.vocab[li].len())].clone())
                .collect();
            if rng.random::<f64>() < self.cfg.mention_rate {
                tokens.insert(0, format!("@u{}", rng.random_range(0..100_000)));
            }
            if rng.random::<f64>() < self.cfg.url_rate {
                tokens.push(format!("https://t.co/{:x}", rng.random::<u32>()));
            }
            let text = tokens.join(" ");
            let score = if labeled {
                let raw =
                    self.clean_score(lang, &text) + self.cfg.noise_std * noise.sample(&mut rng);
                // two decimals, like averaged annotator ratings
                Some((raw.clamp(MIN_SCORE, MAX_SCORE) * 100.0).round() / 100.0)
            } else {
                None
            };
            examples.push(Example::gold(
                format!("{prefix}{i}"),
                lang.clone(),
                score,
                text,
            ));
        }
        Dataset::new(examples).expect("generated ids are unique")
    }

    pub fn labeled(&self, n: usize, prefix: &str, stream_seed: u64) -> Dataset {
        self.sample(n, prefix, stream_seed, true)
    }

    pub fn unlabeled(&self, n: usize, prefix: &str, stream_seed: u64) -> Dataset {
        self.sample(n, prefix, stream_seed, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_valid() {
        let task = SyntheticTask::new(SyntheticConfig::default());
        let a = task.labeled(200, "t", 1);
        let b = SyntheticTask::new(SyntheticConfig::default()).labeled(200, "t", 1);
        assert_eq!(a, b);
        assert_ne!(a, task.labeled(200, "t", 2));
        assert!(a.iter().all(|e| e.text.chars().count() >= 20));
        assert!(task.unlabeled(50, "u", 1).iter().all(|e| e.score.is_none()));
        // English dominates, as in the weights
        assert!(a.language_counts()["en"] > 60);
    }

    #[test]
    fn scores_track_the_hidden_scorer() {
        let task = SyntheticTask::new(SyntheticConfig::default());
        let ds = task.labeled(500, "t", 3);
        let gold: Vec<f64> = ds.iter().map(|e| e.score.unwrap()).collect();
        let clean: Vec<f64> = ds
            .iter()
            .map(|e| task.clean_score(&e.language, &e.text))
            .collect();
        assert!(crate::metrics::pearson(&clean, &gold).unwrap() > 0.85);
    }
}
