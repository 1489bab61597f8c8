//! Frequency-based vocabulary with fixed reserved ids.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::Corpus;

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const CLS_ID: usize = 2;
pub const MASK_ID: usize = 3;
pub const RESERVED_TOKENS: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[MASK]"];

/// Token table with the four reserved entries at ids 0..4.
#[derive(Debug, Clone)]
pub struct Vocab {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Self {
        let mut id_to_token: Vec<String> =
            RESERVED_TOKENS.iter().map(|t| t.to_string()).collect();
        id_to_token.extend(tokens);
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab {
            token_to_id,
            id_to_token,
        }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved tokens are always present
    }

    /// Token id, falling back to `[UNK]`.
    pub fn id_of(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token_of(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    /// One token per line, line number = id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for token in &self.id_to_token {
            writeln!(out, "{token}")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vocab> {
        let display = path.display().to_string();
        let file = std::fs::File::open(path)?;
        let mut tokens = Vec::new();
        for line in BufReader::new(file).lines() {
            tokens.push(line?);
        }
        if tokens.len() < RESERVED_TOKENS.len()
            || tokens[..RESERVED_TOKENS.len()] != RESERVED_TOKENS
        {
            return Err(Error::Format {
                path: display,
                msg: format!(
                    "first {} lines must be the reserved tokens {:?}",
                    RESERVED_TOKENS.len(),
                    RESERVED_TOKENS
                ),
            });
        }
        Ok(Vocab::from_tokens(
            tokens[RESERVED_TOKENS.len()..].to_vec(),
        ))
    }
}

/// Delimiter set for tokenization. Besides whitespace and ASCII punctuation
/// this covers the Bengali danda/double danda and a few common typographic
/// marks; delimiters never become tokens.
fn is_delimiter(c: char) -> bool {
    c.is_whitespace()
        || c.is_ascii_punctuation()
        || matches!(c, '\u{0964}' | '\u{0965}' | '\u{2026}' | '\u{2013}' | '\u{2014}')
}

/// Whitespace-and-punctuation-delimited units of a text.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split(is_delimiter).filter(|t| !t.is_empty()).collect()
}

/// Keep the most frequent tokens, up to `max_vocab` total entries including
/// the four reserved slots. Ties break lexicographically; tokens rarer than
/// `min_freq` are dropped.
pub fn build_vocab(corpus: &Corpus, max_vocab: usize, min_freq: usize) -> Result<Vocab> {
    if corpus.is_empty() {
        return Err(Error::Contract(
            "build_vocab: corpus must be non-empty".into(),
        ));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for review in &corpus.reviews {
        for token in tokenize(&review.text) {
            *counts.entry(token).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_freq.max(1))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let keep = max_vocab.saturating_sub(RESERVED_TOKENS.len());
    entries.truncate(keep);
    Ok(Vocab::from_tokens(
        entries.into_iter().map(|(t, _)| t.to_string()).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Review;

    fn corpus(texts: &[&str]) -> Corpus {
        Corpus {
            reviews: texts
                .iter()
                .enumerate()
                .map(|(i, t)| Review {
                    id: format!("r{i}"),
                    text: t.to_string(),
                    label: None,
                })
                .collect(),
        }
    }

    #[test]
    fn frequency_then_lexicographic_order() {
        let c = corpus(&["a b", "a c"]);
        let v = build_vocab(&c, 10, 1).unwrap();
        assert_eq!(v.id_of("a"), 4);
        assert_eq!(v.id_of("b"), 5);
        assert_eq!(v.id_of("c"), 6);
        assert!(v.id_of("a") < v.id_of("b"));
    }

    #[test]
    fn min_freq_filters() {
        let c = corpus(&["a b", "a c"]);
        let v = build_vocab(&c, 10, 2).unwrap();
        assert_eq!(v.len(), 5); // 4 reserved + "a"
        assert_eq!(v.id_of("b"), UNK_ID);
    }

    #[test]
    fn reserved_ids_are_fixed() {
        let c = corpus(&["x"]);
        let v = build_vocab(&c, 10, 1).unwrap();
        assert_eq!(v.token_of(PAD_ID), Some("[PAD]"));
        assert_eq!(v.token_of(UNK_ID), Some("[UNK]"));
        assert_eq!(v.token_of(CLS_ID), Some("[CLS]"));
        assert_eq!(v.token_of(MASK_ID), Some("[MASK]"));
    }

    #[test]
    fn max_vocab_caps_total_size() {
        let c = corpus(&["a a a b b c d e"]);
        let v = build_vocab(&c, 6, 1).unwrap();
        assert_eq!(v.len(), 6);
        assert_eq!(v.id_of("a"), 4);
        assert_eq!(v.id_of("b"), 5);
        assert_eq!(v.id_of("c"), UNK_ID); // c lost the tie to nothing: capacity is 2
    }

    #[test]
    fn empty_corpus_is_contract_error() {
        assert!(build_vocab(&Corpus::default(), 10, 1).is_err());
    }

    #[test]
    fn tokenize_drops_punctuation() {
        assert_eq!(tokenize("ok, fine! <URL>"), vec!["ok", "fine", "URL"]);
        assert_eq!(
            tokenize("\u{0996}\u{09BE}\u{09AC}\u{09BE}\u{09B0}\u{0964} ok"),
            vec!["\u{0996}\u{09BE}\u{09AC}\u{09BE}\u{09B0}", "ok"]
        );
    }

    #[test]
    fn save_load_roundtrip() {
        let c = corpus(&["alpha beta beta"]);
        let v = build_vocab(&c, 10, 1).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        v.save(f.path()).unwrap();
        let loaded = Vocab::load(f.path()).unwrap();
        assert_eq!(loaded.len(), v.len());
        assert_eq!(loaded.id_of("beta"), v.id_of("beta"));
    }

    #[test]
    fn load_rejects_missing_reserved_header() {
        use std::io::Write as _;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "foo\nbar").unwrap();
        assert!(matches!(
            Vocab::load(f.path()),
            Err(Error::Format { .. })
        ));
    }
}
