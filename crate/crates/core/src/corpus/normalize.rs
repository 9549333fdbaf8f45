use std::fmt;
use std::sync::LazyLock;

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};

use super::{Example, NormalizationConfig};

// A handle is `@` plus ASCII word characters; a URL runs from its prefix to the
// next whitespace. Both alternatives are tried leftmost-first in one pass.
static MENTION_OR_URL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?P<user>@[A-Za-z0-9_]+)|(?P<url>(?i:https?://|www\.)\S*)").unwrap()
});

/// Masks user handles and URLs. Everything else, hashtags included, is left alone.
pub fn normalize_text(text: &str, cfg: &NormalizationConfig) -> String {
    MENTION_OR_URL
        .replace_all(text, |caps: &Captures<'_>| {
            if caps.name("user").is_some() {
                cfg.user_token.clone()
            } else {
                cfg.url_token.clone()
            }
        })
        .into_owned()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    TooShort,
    Language,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::TooShort => "too_short",
            DropReason::Language => "language",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterDecision {
    Keep,
    Drop(DropReason),
}

/// Length is measured in unicode scalar values on the already-normalized text.
/// The length rule is checked before the language rule.
pub fn filter_record(ex: &Example, cfg: &NormalizationConfig) -> FilterDecision {
    if ex.text.chars().count() < cfg.min_chars {
        FilterDecision::Drop(DropReason::TooShort)
    } else if !cfg.language_whitelist.contains(&ex.language) {
        FilterDecision::Drop(DropReason::Language)
    } else {
        FilterDecision::Keep
    }
}
