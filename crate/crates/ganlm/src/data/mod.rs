//! Corpus ingestion, vocabulary, batching, the split harness, synthetic
//! corpus generation, and embedding-file interop.
//!
//! A corpus file is UTF-8 JSON Lines: one object per line with fields `id`,
//! `text`, and an optional `label`. Loading normalizes every text through
//! [`crate::textnorm`] and validates labels against the declared class set.

mod batch;
mod embed;
mod split;
mod synth;
mod vocab;

pub use batch::{encode_reviews, EncodedBatch};
pub use embed::{read_embeddings, write_embeddings, EmbeddingRecord};
pub use split::{make_split, DataSplit, SplitSpec};
pub use synth::{benchmark_profiles, generate_synthetic_corpus, ClassProfile};
pub use vocab::{build_vocab, tokenize, Vocab, CLS_ID, MASK_ID, PAD_ID, RESERVED_TOKENS, UNK_ID};

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textnorm::{normalize_text, NormalizerConfig};

/// One text with an optional class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Review {
    pub id: String,
    pub text: String,
    pub label: Option<String>,
}

/// Ordered collection of reviews.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub reviews: Vec<Review>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.reviews.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reviews.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

/// Load a corpus file, normalizing texts and validating labels.
pub fn load_corpus(
    path: &Path,
    classes: &[String],
    normalizer: &NormalizerConfig,
) -> Result<Corpus> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path)?;
    let mut reviews = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: display.clone(),
            line: line_no,
            msg: e.to_string(),
        })?;
        if let Some(label) = &raw.label {
            if !classes.iter().any(|c| c == label) {
                return Err(Error::Label {
                    path: display.clone(),
                    line: line_no,
                    label: label.clone(),
                    classes: classes.to_vec(),
                });
            }
        }
        if !seen_ids.insert(raw.id.clone()) {
            return Err(Error::DuplicateId {
                path: display.clone(),
                line: line_no,
                id: raw.id,
            });
        }
        let text = normalize_text(&raw.text, normalizer);
        if text.is_empty() {
            return Err(Error::Parse {
                path: display.clone(),
                line: line_no,
                msg: format!("record {:?} has empty text after normalization", raw.id),
            });
        }
        reviews.push(Review {
            id: raw.id,
            text,
            label: raw.label,
        });
    }
    Ok(Corpus { reviews })
}

/// Write a corpus as JSON Lines.
pub fn save_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for review in &corpus.reviews {
        let raw = RawRecord {
            id: review.id.clone(),
            text: review.text.clone(),
            label: review.label.clone(),
        };
        let line = serde_json::to_string(&raw).expect("review serializes");
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// The canonical binary class set of the fake-review task.
pub fn default_classes() -> Vec<String> {
    vec!["fake".to_string(), "authentic".to_string()]
}
