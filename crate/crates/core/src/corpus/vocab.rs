use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const PAD_ID: usize = 0;
pub const OOV_ID: usize = 1;
const PAD_TOKEN: &str = "<pad>";
const OOV_TOKEN: &str = "<oov>";

/// Dense token-id mapping. Ids 0 and 1 are reserved for padding and
/// out-of-vocabulary tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    max_size: usize,
}

impl Vocabulary {
    fn with_tokens(real: Vec<String>, max_size: usize) -> Self {
        let mut tokens = vec![PAD_TOKEN.to_string(), OOV_TOKEN.to_string()];
        tokens.extend(real);
        let index = tokens.iter().enumerate().skip(2).map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index, max_size }
    }

    /// Builds a vocabulary from an explicit token → id map, as in the
    /// text file form. Ids must be dense starting at 2.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, usize)>) -> Result<Self> {
        let mut pairs: Vec<(String, usize)> = pairs.into_iter().collect();
        pairs.sort_by_key(|(_, id)| *id);
        let mut real = Vec::with_capacity(pairs.len());
        for (expected, (tok, id)) in (2..).zip(pairs) {
            if id != expected {
                return Err(Error::invalid(format!("vocabulary ids not dense: expected {expected}, found {id} for {tok:?}")));
            }
            if tok == PAD_TOKEN || tok == OOV_TOKEN || tok.is_empty() || tok.contains(char::is_whitespace) {
                return Err(Error::invalid(format!("invalid vocabulary token {tok:?}")));
            }
            real.push(tok);
        }
        let size = real.len() + 2;
        let v = Self::with_tokens(real, size);
        if v.index.len() != v.tokens.len() - 2 {
            return Err(Error::invalid("duplicate token in vocabulary"));
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(OOV_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// `token<TAB>id` per line, sorted by id, including the reserved rows.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            let _ = writeln!(s, "{t}\t{i}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (tok, id) = line
                .split_once('\t')
                .ok_or_else(|| Error::invalid(format!("vocabulary line {} lacks a tab", n + 1)))?;
            let id: usize = id
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("vocabulary line {} has a bad id", n + 1)))?;
            match (tok, id) {
                (PAD_TOKEN, PAD_ID) | (OOV_TOKEN, OOV_ID) => {}
                (PAD_TOKEN, _) | (OOV_TOKEN, _) | (_, PAD_ID) | (_, OOV_ID) => {
                    return Err(Error::invalid(format!("reserved id/token misplaced on line {}", n + 1)))
                }
                _ => pairs.push((tok.to_string(), id)),
            }
        }
        Self::from_pairs(pairs)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// SHA-256 of the text form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

/// Ranks tokens by descending frequency (ties lexicographic) and keeps the
/// top `max_size - 2`.
pub fn build_vocabulary<S: AsRef<str>>(corpus: &[S], max_size: usize) -> Result<Vocabulary> {
    if max_size < 3 {
        return Err(Error::invalid(format!("vocabulary max_size must be at least 3, got {max_size}")));
    }
    if corpus.is_empty() {
        return Err(Error::invalid("cannot build a vocabulary from an empty corpus"));
    }
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for doc in corpus {
        for tok in doc.as_ref().split_whitespace() {
            if tok != PAD_TOKEN && tok != OOV_TOKEN {
                *freq.entry(tok).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, usize)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let real = ranked.into_iter().take(max_size - 2).map(|(t, _)| t.to_string()).collect();
    Ok(Vocabulary::with_tokens(real, max_size))
}

/// Fixed-length id sequence fed to a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    pub label_id: usize,
    pub original_record_id: String,
}

/// Maps whitespace tokens to ids, truncating or right-padding to `max_len`.
pub fn tokenize(text: &str, vocab: &Vocabulary, max_len: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = text.split_whitespace().take(max_len).map(|t| vocab.id(t)).collect();
    ids.resize(max_len, PAD_ID);
    ids
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab_of(tokens: &[&str]) -> Vocabulary {
        Vocabulary::from_pairs(tokens.iter().enumerate().map(|(i, t)| (t.to_string(), i + 2))).unwrap()
    }

    #[test]
    fn frequency_ranking_with_lexicographic_ties() {
        let v = build_vocabulary(&["a b", "a c"], 4).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v.id("a"), 2);
        assert_eq!(v.id("b"), 3);
        assert_eq!(v.id("c"), OOV_ID);

        let v = build_vocabulary(&["x"], 3).unwrap();
        assert_eq!(v.to_text(), "<pad>\t0\n<oov>\t1\nx\t2\n");

        assert_eq!(build_vocabulary(&["a a a"], 10).unwrap().len(), 3);
    }

    #[test]
    fn rejects_tiny_max_size_and_empty_corpus() {
        assert!(build_vocabulary(&["a"], 2).is_err());
        assert!(build_vocabulary::<&str>(&[], 10).is_err());
    }

    #[test]
    fn tokenize_examples() {
        let v = vocab_of(&["circuit", "breaker"]);
        assert_eq!(tokenize("circuit breaker fuse", &v, 5), vec![2, 3, 1, 0, 0]);
        assert_eq!(tokenize("", &v, 3), vec![0, 0, 0]);
        let v = vocab_of(&["a", "b", "c", "d"]);
        assert_eq!(tokenize("a b c d", &v, 2), vec![2, 3]);
    }

    #[test]
    fn text_form_round_trip_and_hash() {
        let v = build_vocabulary(&["pump valve pump", "valve seal"], 50).unwrap();
        let back = Vocabulary::from_text(&v.to_text()).unwrap();
        assert_eq!(back.to_text(), v.to_text());
        assert_eq!(back.hash(), v.hash());
        assert_ne!(v.hash(), build_vocabulary(&["pump"], 50).unwrap().hash());
    }

    #[test]
    fn malformed_text_rejected() {
        assert!(Vocabulary::from_text("<pad>\t0\n<oov>\t1\nx\t3\n").is_err());
        assert!(Vocabulary::from_text("x\t0\n").is_err());
        assert!(Vocabulary::from_text("<pad> 0\n").is_err());
    }

    proptest! {
        #[test]
        fn tokenize_length_and_range(
            words in proptest::collection::vec("[a-e]{1,3}", 0..30),
            max_len in 1usize..20,
        ) {
            let text = words.join(" ");
            let v = build_vocabulary(&[text.clone(), "a b".into()], 8).unwrap();
            let ids = tokenize(&text, &v, max_len);
            prop_assert_eq!(ids.len(), max_len);
            prop_assert!(ids.iter().all(|&i| i < v.len()));
            prop_assert!(v.len() <= 8);
        }
    }
}
