//! Text records, datasets and the preprocessing rules applied to raw posts.

mod io;
mod normalize;
mod stats;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) use io::tsv_text;
pub use io::{read_dataset, write_dataset, Format, TSV_HEADER};
pub use normalize::{filter_record, normalize_text, DropReason, FilterDecision};
pub use stats::{corpus_stats, stats_table, stats_tsv, LanguageShare};

pub const MIN_SCORE: f64 = 1.0;
pub const MAX_SCORE: f64 = 5.0;

/// The ten task languages, in the order the shared task lists them.
pub const DEFAULT_LANGUAGES: [&str; 10] =
    ["en", "es", "pt", "it", "fr", "zh", "hi", "nl", "ko", "ar"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Gold,
    Pseudo,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Gold => "gold",
            Origin::Pseudo => "pseudo",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Origin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gold" => Ok(Origin::Gold),
            "pseudo" => Ok(Origin::Pseudo),
            other => Err(format!("unknown origin {other:?}")),
        }
    }
}

/// One text record.
///
/// Gold examples carry an optional score in `[1, 5]`. Pseudo-labeled examples
/// carry the raw ensemble mean as their score (which an unclamped regressor may
/// push slightly outside `[1, 5]`) together with the ensemble standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub language: String,
    pub score: Option<f64>,
    pub origin: Origin,
    pub confidence_std: Option<f64>,
    pub text: String,
}

impl Example {
    pub fn gold(
        id: impl Into<String>,
        language: impl Into<String>,
        score: Option<f64>,
        text: impl Into<String>,
    ) -> Self {
        Example {
            id: id.into(),
            language: language.into(),
            score,
            origin: Origin::Gold,
            confidence_std: None,
            text: text.into(),
        }
    }

    pub fn pseudo(
        id: impl Into<String>,
        language: impl Into<String>,
        score: f64,
        confidence_std: f64,
        text: impl Into<String>,
    ) -> Self {
        Example {
            id: id.into(),
            language: language.into(),
            score: Some(score),
            origin: Origin::Pseudo,
            confidence_std: Some(confidence_std),
            text: text.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |message: String| Error::InvalidExample {
            id: self.id.clone(),
            message,
        };
        if self.id.is_empty() {
            return Err(invalid("empty id".into()));
        }
        if self.id.contains(['\t', '\n', '\r']) {
            return Err(invalid("id contains a tab or line break".into()));
        }
        if !is_language_code(&self.language) {
            return Err(invalid(format!(
                "language {:?} is not a lowercase two-letter code",
                self.language
            )));
        }
        match self.origin {
            Origin::Gold => {
                if let Some(score) = self.score {
                    if !(MIN_SCORE..=MAX_SCORE).contains(&score) {
                        return Err(invalid(format!("score {score} outside [1, 5]")));
                    }
                }
                if self.confidence_std.is_some() {
                    return Err(invalid("confidence_std set on a gold example".into()));
                }
            }
            Origin::Pseudo => {
                match self.score {
                    Some(s) if s.is_finite() => {}
                    _ => return Err(invalid("pseudo example needs a finite score".into())),
                }
                match self.confidence_std {
                    Some(s) if s.is_finite() && s >= 0.0 => {}
                    _ => {
                        return Err(invalid(
                            "pseudo example needs a finite nonnegative confidence_std".into(),
                        ))
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn is_language_code(code: &str) -> bool {
    code.len() == 2 && code.bytes().all(|b| b.is_ascii_lowercase())
}

/// Ordered examples with a per-language histogram kept in sync.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
    language_counts: BTreeMap<String, usize>,
}

impl Dataset {
    pub fn new(examples: Vec<Example>) -> Result<Self> {
        let mut ds = Dataset::default();
        ds.examples.reserve(examples.len());
        let mut seen = HashSet::with_capacity(examples.len());
        for ex in examples {
            ex.validate()?;
            if !seen.insert(ex.id.clone()) {
                return Err(Error::DuplicateId(ex.id));
            }
            *ds.language_counts.entry(ex.language.clone()).or_default() += 1;
            ds.examples.push(ex);
        }
        Ok(ds)
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn into_examples(self) -> Vec<Example> {
        self.examples
    }

    pub fn language_counts(&self) -> &BTreeMap<String, usize> {
        &self.language_counts
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Example> {
        self.examples.iter()
    }

    /// Examples selected by position, in the order given.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut ds = Dataset::default();
        for &i in indices {
            let ex = self.examples[i].clone();
            *ds.language_counts.entry(ex.language.clone()).or_default() += 1;
            ds.examples.push(ex);
        }
        ds
    }

    /// Keeps the examples matching `pred`, in order.
    pub fn filter(&self, mut pred: impl FnMut(&Example) -> bool) -> Dataset {
        let indices: Vec<usize> = (0..self.examples.len())
            .filter(|&i| pred(&self.examples[i]))
            .collect();
        self.subset(&indices)
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Example;
    type IntoIter = std::slice::Iter<'a, Example>;

    fn into_iter(self) -> Self::IntoIter {
        self.examples.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationConfig {
    pub user_token: String,
    pub url_token: String,
    pub min_chars: usize,
    pub language_whitelist: BTreeSet<String>,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            user_token: "@user".into(),
            url_token: "http".into(),
            min_chars: 20,
            language_whitelist: DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl NormalizationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.language_whitelist.is_empty() {
            return Err(Error::Config("language whitelist is empty".into()));
        }
        if let Some(bad) = self
            .language_whitelist
            .iter()
            .find(|l| !is_language_code(l))
        {
            return Err(Error::Config(format!(
                "bad language code {bad:?} in whitelist"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_follow_examples() {
        let ds = Dataset::new(vec![
            Example::gold("a", "en", Some(2.0), "x"),
            Example::gold("b", "es", None, "y"),
            Example::gold("c", "en", Some(5.0), "z"),
        ])
        .unwrap();
        assert_eq!(ds.language_counts()["en"], 2);
        assert_eq!(ds.language_counts()["es"], 1);
        let sub = ds.filter(|e| e.language == "en");
        assert_eq!(sub.len(), 2);
        assert_eq!(sub.language_counts().len(), 1);
    }

    #[test]
    fn rejects_duplicates_and_bad_fields() {
        let dup = Dataset::new(vec![
            Example::gold("a", "en", None, "x"),
            Example::gold("a", "en", None, "y"),
        ]);
        assert!(matches!(dup, Err(Error::DuplicateId(id)) if id == "a"));

        assert!(Example::gold("a", "en", Some(5.5), "x").validate().is_err());
        assert!(Example::gold("a", "EN", None, "x").validate().is_err());
        assert!(Example::gold("a", "eng", None, "x").validate().is_err());
        let mut ex = Example::gold("a", "en", Some(1.0), "x");
        ex.confidence_std = Some(0.01);
        assert!(ex.validate().is_err());
        // pseudo scores are raw ensemble means and may leave [1, 5]
        assert!(Example::pseudo("p", "en", 5.2, 0.01, "x")
            .validate()
            .is_ok());
        assert!(Example::pseudo("p", "en", 3.0, -0.1, "x")
            .validate()
            .is_err());
    }
}
