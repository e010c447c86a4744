use std::collections::HashSet;
use std::path::Path;

use crate::{Error, Result};

/// Built-in English function words.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be",
    "been", "but", "by", "can", "for", "from", "has", "have", "how", "if", "in", "into", "is",
    "it", "its", "no", "not", "of", "on", "or", "other", "out", "so", "such", "than", "that",
    "the", "their", "then", "there", "these", "this", "those", "to", "up", "was", "were", "what",
    "when", "which", "while", "with",
];

/// A set of tokens removed during normalization. Entries are stored in their
/// normalized form so that matching is consistent with [`normalize_text`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopWords(HashSet<String>);

impl StopWords {
    pub fn none() -> Self {
        StopWords(HashSet::new())
    }

    pub fn builtin() -> Self {
        Self::from_words(DEFAULT_STOPWORDS.iter().copied())
    }

    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        StopWords(
            words
                .into_iter()
                .flat_map(|w| strip_symbols(w).split_whitespace().map(str::to_string).collect::<Vec<_>>())
                .collect(),
        )
    }

    /// One word per line; blank lines and `#` comments ignored.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_words(
            text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')),
        ))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn strip_symbols(raw: &str) -> String {
    raw.to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect()
}

/// Lowercases, drops symbols, collapses whitespace and removes stopwords.
pub fn normalize_text(raw: &str, stopwords: &StopWords) -> String {
    let cleaned = strip_symbols(raw);
    let mut out = String::with_capacity(cleaned.len());
    for tok in cleaned.split_whitespace().filter(|t| !stopwords.contains(t)) {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

/// Normalized short + medium (+ ETIM) description, joined by single spaces.
pub fn combined_text(short: &str, medium: &str, etim: Option<&str>, stopwords: &StopWords) -> String {
    [Some(short), Some(medium), etim]
        .into_iter()
        .flatten()
        .map(|part| normalize_text(part, stopwords))
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}
