//! Token-id batches with attention and label masks.

use crate::error::{Error, Result};

use super::{tokenize, Review, Vocab, CLS_ID, PAD_ID};

/// A `(n, max_len)` matrix of token ids plus per-row label information.
///
/// `attention_mask` is true exactly on non-`[PAD]` positions, and
/// `labeled_mask[i]` holds iff `labels[i] >= 0`.
#[derive(Debug, Clone)]
pub struct EncodedBatch {
    pub n: usize,
    pub max_len: usize,
    pub token_ids: Vec<usize>,
    pub attention_mask: Vec<bool>,
    pub labels: Vec<i64>,
    pub labeled_mask: Vec<bool>,
}

impl EncodedBatch {
    pub fn row(&self, i: usize) -> &[usize] {
        &self.token_ids[i * self.max_len..(i + 1) * self.max_len]
    }

    pub fn mask_row(&self, i: usize) -> &[bool] {
        &self.attention_mask[i * self.max_len..(i + 1) * self.max_len]
    }

    /// New batch holding the given rows, in order.
    pub fn select(&self, rows: &[usize]) -> EncodedBatch {
        let mut out = EncodedBatch {
            n: rows.len(),
            max_len: self.max_len,
            token_ids: Vec::with_capacity(rows.len() * self.max_len),
            attention_mask: Vec::with_capacity(rows.len() * self.max_len),
            labels: Vec::with_capacity(rows.len()),
            labeled_mask: Vec::with_capacity(rows.len()),
        };
        for &r in rows {
            out.token_ids.extend_from_slice(self.row(r));
            out.attention_mask.extend_from_slice(self.mask_row(r));
            out.labels.push(self.labels[r]);
            out.labeled_mask.push(self.labeled_mask[r]);
        }
        out
    }
}

/// Encode reviews as `[CLS]`-prefixed id rows, truncated to `max_len` and
/// right-padded with `[PAD]`. Labels map to indices in `classes`; unlabeled
/// rows get -1. An empty class set encodes label-agnostically (every row
/// unlabeled), which is what MLM pretraining wants.
pub fn encode_reviews(
    reviews: &[Review],
    vocab: &Vocab,
    max_len: usize,
    classes: &[String],
) -> Result<EncodedBatch> {
    if max_len < 2 {
        return Err(Error::Contract(format!(
            "encode_reviews: max_len must be at least 2, got {max_len}"
        )));
    }
    let n = reviews.len();
    let mut token_ids = Vec::with_capacity(n * max_len);
    let mut attention_mask = Vec::with_capacity(n * max_len);
    let mut labels = Vec::with_capacity(n);
    let mut labeled_mask = Vec::with_capacity(n);
    for review in reviews {
        let mut row = vec![CLS_ID];
        for token in tokenize(&review.text) {
            if row.len() == max_len {
                break;
            }
            row.push(vocab.id_of(token));
        }
        let used = row.len();
        row.resize(max_len, PAD_ID);
        token_ids.extend_from_slice(&row);
        attention_mask.extend((0..max_len).map(|j| j < used));
        let label = match &review.label {
            Some(_) if classes.is_empty() => -1,
            Some(name) => classes
                .iter()
                .position(|c| c == name)
                .map(|i| i as i64)
                .ok_or_else(|| Error::Contract(format!("label {name:?} not in class set")))?,
            None => -1,
        };
        labels.push(label);
        labeled_mask.push(label >= 0);
    }
    Ok(EncodedBatch {
        n,
        max_len,
        token_ids,
        attention_mask,
        labels,
        labeled_mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_vocab, Corpus, UNK_ID};

    fn setup() -> (Vocab, Vec<String>) {
        let corpus = Corpus {
            reviews: vec![Review {
                id: "r".into(),
                text: "a b".into(),
                label: None,
            }],
        };
        let vocab = build_vocab(&corpus, 10, 1).unwrap();
        (vocab, vec!["fake".into(), "authentic".into()])
    }

    fn review(text: &str, label: Option<&str>) -> Review {
        Review {
            id: format!("id-{text}"),
            text: text.into(),
            label: label.map(String::from),
        }
    }

    #[test]
    fn basic_construction() {
        let (vocab, classes) = setup();
        let batch = encode_reviews(&[review("a b", None)], &vocab, 4, &classes).unwrap();
        assert_eq!(
            batch.row(0),
            &[CLS_ID, vocab.id_of("a"), vocab.id_of("b"), PAD_ID]
        );
        assert_eq!(batch.mask_row(0), &[true, true, true, false]);
        assert_eq!(batch.labels[0], -1);
        assert!(!batch.labeled_mask[0]);
    }

    #[test]
    fn out_of_vocab_becomes_unk() {
        let (vocab, classes) = setup();
        let batch = encode_reviews(&[review("a zzz", None)], &vocab, 4, &classes).unwrap();
        assert_eq!(batch.row(0)[2], UNK_ID);
    }

    #[test]
    fn long_text_truncates_to_max_len() {
        let (vocab, classes) = setup();
        let batch = encode_reviews(&[review("a b a b a b a b", None)], &vocab, 4, &classes).unwrap();
        assert_eq!(batch.row(0).len(), 4);
        assert!(batch.mask_row(0).iter().all(|&m| m));
    }

    #[test]
    fn labels_map_to_class_indices() {
        let (vocab, classes) = setup();
        let batch = encode_reviews(
            &[review("a", Some("authentic")), review("b", Some("fake"))],
            &vocab,
            4,
            &classes,
        )
        .unwrap();
        assert_eq!(batch.labels, vec![1, 0]);
        assert_eq!(batch.labeled_mask, vec![true, true]);
    }

    #[test]
    fn attention_mask_counts_tokens_plus_cls() {
        let (vocab, classes) = setup();
        let batch = encode_reviews(&[review("a b", None)], &vocab, 8, &classes).unwrap();
        let count = batch.mask_row(0).iter().filter(|&&m| m).count();
        assert_eq!(count, 3);
    }

    #[test]
    fn select_reorders_rows() {
        let (vocab, classes) = setup();
        let batch = encode_reviews(
            &[review("a", Some("fake")), review("b", None)],
            &vocab,
            4,
            &classes,
        )
        .unwrap();
        let picked = batch.select(&[1, 0, 1]);
        assert_eq!(picked.n, 3);
        assert_eq!(picked.row(0), batch.row(1));
        assert_eq!(picked.labels, vec![-1, 0, -1]);
    }

    #[test]
    fn max_len_below_two_is_rejected() {
        let (vocab, classes) = setup();
        assert!(encode_reviews(&[review("a", None)], &vocab, 1, &classes).is_err());
    }
}
