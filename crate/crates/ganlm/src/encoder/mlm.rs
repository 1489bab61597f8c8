//! Masked-language-model pretraining.
//!
//! BERT-style corruption: 15% of non-`[PAD]`, non-`[CLS]` positions are
//! selected; of those, 80% become `[MASK]`, 10% a random non-reserved token,
//! 10% stay unchanged. The loss is cross-entropy of a separate output
//! projection predicting the original ids at selected positions.

use crate::data::{encode_reviews, Corpus, EncodedBatch, Vocab, CLS_ID, MASK_ID, PAD_ID, RESERVED_TOKENS};
use crate::error::{Error, Result};
use crate::tensor::{zero_grads, AdamW, AdamWConfig, Mode, Rng, Tape, Tensor};

use super::{encode_positions, EncoderConfig, EncoderParams, LinearParams};

/// Output projection from hidden states to vocabulary logits.
#[derive(Debug, Clone)]
pub struct MlmHead {
    pub proj: LinearParams,
}

impl MlmHead {
    pub fn init(config: &EncoderConfig, rng: &mut Rng) -> Self {
        MlmHead {
            proj: LinearParams::init(rng, config.model_dim, config.vocab_size),
        }
    }

    pub fn params(&self) -> Vec<Tensor> {
        self.proj.params()
    }
}

/// Training controls for pretraining.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlmHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub mask_rate: f64,
}

impl Default for MlmHyper {
    fn default() -> Self {
        MlmHyper {
            epochs: 5,
            batch_size: 16,
            learning_rate: 1e-3,
            mask_rate: 0.15,
        }
    }
}

/// Pretrained encoder, its MLM head, and the per-epoch mean loss curve.
#[derive(Debug)]
pub struct MlmOutcome {
    pub encoder: EncoderParams,
    pub head: MlmHead,
    pub epoch_losses: Vec<f64>,
}

/// Corrupt a batch for MLM. Returns the corrupted batch and per-position
/// targets: the original id at selected positions, -1 elsewhere.
pub fn mask_tokens(
    batch: &EncodedBatch,
    rng: &mut Rng,
    mask_rate: f64,
    vocab_size: usize,
) -> (EncodedBatch, Vec<i64>) {
    let mut corrupted = batch.clone();
    let mut targets = vec![-1i64; batch.token_ids.len()];
    if mask_rate <= 0.0 {
        return (corrupted, targets);
    }
    let n_regular = vocab_size.saturating_sub(RESERVED_TOKENS.len());
    for (i, &id) in batch.token_ids.iter().enumerate() {
        if id == PAD_ID || id == CLS_ID {
            continue;
        }
        if rng.next_f64() >= mask_rate {
            continue;
        }
        targets[i] = id as i64;
        let u = rng.next_f64();
        if u < 0.8 {
            corrupted.token_ids[i] = MASK_ID;
        } else if u < 0.9 && n_regular > 0 {
            corrupted.token_ids[i] = RESERVED_TOKENS.len() + rng.next_below(n_regular);
        }
        // otherwise: keep the original token
    }
    (corrupted, targets)
}

/// Mean masked-token cross-entropy of an encoder + head on a batch whose
/// corruption is drawn from `rng`, in eval mode.
pub fn masked_cross_entropy(
    encoder: &EncoderParams,
    head: &MlmHead,
    batch: &EncodedBatch,
    mask_rate: f64,
    rng: &mut Rng,
) -> Result<f64> {
    let (corrupted, targets) = mask_tokens(batch, rng, mask_rate, encoder.config.vocab_size);
    let mut tape = Tape::inference();
    let mut unused_rng = Rng::new(0);
    let hidden = encode_positions(&mut tape, &corrupted, encoder, Mode::Eval, &mut unused_rng)?;
    let logits = head.proj.apply(&mut tape, &hidden)?;
    let mask: Vec<bool> = targets.iter().map(|&t| t >= 0).collect();
    let loss = tape.cross_entropy_from_logits(&logits, &targets, &mask)?;
    Ok(loss.item())
}

/// Pretrain an encoder on a corpus. `epochs = 0` returns the initialization
/// unchanged (empty loss history).
pub fn mlm_pretrain(
    corpus: &Corpus,
    vocab: &Vocab,
    config: EncoderConfig,
    dropout: f64,
    hyper: &MlmHyper,
    rng: &mut Rng,
) -> Result<MlmOutcome> {
    if corpus.is_empty() {
        return Err(Error::Contract("mlm_pretrain: corpus is empty".into()));
    }
    let encoder = EncoderParams::init(config, dropout, rng)?;
    let head = MlmHead::init(&config, rng);
    let batch_all = encode_reviews(&corpus.reviews, vocab, config.max_len, &[])?;

    let mut params = encoder.params();
    params.extend(head.params());
    let mut optimizer = AdamW::new(AdamWConfig::with_lr(hyper.learning_rate), &params);

    let mut epoch_losses = Vec::with_capacity(hyper.epochs);
    for _ in 0..hyper.epochs {
        let mut order: Vec<usize> = (0..batch_all.n).collect();
        rng.shuffle(&mut order);
        let mut total = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(hyper.batch_size.max(1)) {
            let batch = batch_all.select(chunk);
            let (corrupted, targets) =
                mask_tokens(&batch, rng, hyper.mask_rate, config.vocab_size);
            let mask: Vec<bool> = targets.iter().map(|&t| t >= 0).collect();

            zero_grads(&params);
            let mut tape = Tape::new();
            let hidden = encode_positions(&mut tape, &corrupted, &encoder, Mode::Train, rng)?;
            let logits = head.proj.apply(&mut tape, &hidden)?;
            let loss = tape.cross_entropy_from_logits(&logits, &targets, &mask)?;
            let loss_value = loss.item();
            if !loss_value.is_finite() {
                return Err(Error::Contract(format!(
                    "mlm_pretrain: non-finite loss {loss_value}"
                )));
            }
            tape.backward(&loss)?;
            optimizer.step(&params)?;
            total += loss_value;
            steps += 1;
        }
        epoch_losses.push(total / steps.max(1) as f64);
    }
    Ok(MlmOutcome {
        encoder,
        head,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{benchmark_profiles, build_vocab, generate_synthetic_corpus};

    fn synth_corpus(n_per_class: usize, seed: u64) -> (Corpus, Vocab) {
        let classes = vec!["fake".to_string(), "authentic".to_string()];
        let (shared, profiles) = benchmark_profiles(&classes, 40, 4, 0.3);
        let mut rng = Rng::new(seed);
        let corpus =
            generate_synthetic_corpus(&mut rng, n_per_class, 12, &shared, &profiles).unwrap();
        let vocab = build_vocab(&corpus, 100, 1).unwrap();
        (corpus, vocab)
    }

    fn tiny_config(vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            model_dim: 16,
            n_layers: 1,
            n_heads: 2,
            ffn_dim: 32,
            max_len: 16,
        }
    }

    #[test]
    fn mask_rate_zero_is_noop() {
        let (corpus, vocab) = synth_corpus(5, 1);
        let batch = encode_reviews(&corpus.reviews, &vocab, 16, &[]).unwrap();
        let mut rng = Rng::new(2);
        let (corrupted, targets) = mask_tokens(&batch, &mut rng, 0.0, vocab.len());
        assert_eq!(corrupted.token_ids, batch.token_ids);
        assert!(targets.iter().all(|&t| t == -1));
    }

    #[test]
    fn selection_fraction_near_rate() {
        let (corpus, vocab) = synth_corpus(500, 3);
        let batch = encode_reviews(&corpus.reviews, &vocab, 16, &[]).unwrap();
        let mut rng = Rng::new(4);
        let (_, targets) = mask_tokens(&batch, &mut rng, 0.15, vocab.len());
        let eligible = batch
            .token_ids
            .iter()
            .filter(|&&id| id != PAD_ID && id != CLS_ID)
            .count();
        assert!(eligible > 10_000, "need enough tokens, got {eligible}");
        let selected = targets.iter().filter(|&&t| t >= 0).count();
        let fraction = selected as f64 / eligible as f64;
        assert!((fraction - 0.15).abs() < 0.02, "fraction {fraction}");
    }

    #[test]
    fn cls_and_pad_never_selected() {
        let (corpus, vocab) = synth_corpus(50, 5);
        let batch = encode_reviews(&corpus.reviews, &vocab, 20, &[]).unwrap();
        let mut rng = Rng::new(6);
        let (corrupted, targets) = mask_tokens(&batch, &mut rng, 0.9, vocab.len());
        for (i, &id) in batch.token_ids.iter().enumerate() {
            if id == PAD_ID || id == CLS_ID {
                assert_eq!(targets[i], -1);
                assert_eq!(corrupted.token_ids[i], id);
            }
        }
    }

    #[test]
    fn corruption_mix_is_roughly_80_10_10() {
        let (corpus, vocab) = synth_corpus(100, 7);
        let batch = encode_reviews(&corpus.reviews, &vocab, 16, &[]).unwrap();
        let mut rng = Rng::new(8);
        let (corrupted, targets) = mask_tokens(&batch, &mut rng, 0.5, vocab.len());
        let mut masked = 0;
        let mut kept = 0;
        let mut random = 0;
        for (i, &t) in targets.iter().enumerate() {
            if t < 0 {
                continue;
            }
            if corrupted.token_ids[i] == MASK_ID {
                masked += 1;
            } else if corrupted.token_ids[i] == t as usize {
                kept += 1;
            } else {
                random += 1;
            }
        }
        let total = (masked + kept + random) as f64;
        assert!((masked as f64 / total - 0.8).abs() < 0.05);
        // random replacement may coincide with the original token, so the
        // observed "kept" fraction sits slightly above 0.1
        assert!((kept as f64 / total - 0.1).abs() < 0.06);
        assert!((random as f64 / total - 0.1).abs() < 0.06);
    }

    #[test]
    fn epochs_zero_returns_initialization() {
        let (corpus, vocab) = synth_corpus(10, 9);
        let config = tiny_config(vocab.len());
        let hyper = MlmHyper {
            epochs: 0,
            ..Default::default()
        };
        let mut rng = Rng::new(10);
        let outcome = mlm_pretrain(&corpus, &vocab, config, 0.1, &hyper, &mut rng).unwrap();
        assert!(outcome.epoch_losses.is_empty());

        let mut rng2 = Rng::new(10);
        let fresh = EncoderParams::init(config, 0.1, &mut rng2).unwrap();
        let (a, b) = (outcome.encoder.params(), fresh.params());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.to_vec(), y.to_vec());
        }
    }

    #[test]
    fn initial_loss_is_near_log_vocab() {
        let (corpus, vocab) = synth_corpus(20, 11);
        let config = tiny_config(vocab.len());
        let mut rng = Rng::new(12);
        let encoder = EncoderParams::init(config, 0.0, &mut rng).unwrap();
        let head = MlmHead::init(&config, &mut rng);
        let batch = encode_reviews(&corpus.reviews, &vocab, 16, &[]).unwrap();
        let mut mask_rng = Rng::new(13);
        let loss = masked_cross_entropy(&encoder, &head, &batch, 0.15, &mut mask_rng).unwrap();
        let expected = (vocab.len() as f64).ln();
        assert!(
            (loss - expected).abs() / expected < 0.1,
            "loss {loss} vs ln(V) {expected}"
        );
    }

    #[test]
    fn training_reduces_loss_and_perplexity() {
        let (corpus, vocab) = synth_corpus(100, 14);
        let config = tiny_config(vocab.len());
        let hyper = MlmHyper {
            epochs: 3,
            batch_size: 16,
            learning_rate: 2e-3,
            mask_rate: 0.15,
        };
        let mut rng = Rng::new(15);
        let outcome = mlm_pretrain(&corpus, &vocab, config, 0.1, &hyper, &mut rng).unwrap();
        assert_eq!(outcome.epoch_losses.len(), 3);
        assert!(
            outcome.epoch_losses.last().unwrap() < outcome.epoch_losses.first().unwrap(),
            "losses {:?}",
            outcome.epoch_losses
        );

        // held-out perplexity beats an untrained encoder with the same seed
        let (held_out, _) = synth_corpus(20, 99);
        let held_batch = encode_reviews(&held_out.reviews, &vocab, 16, &[]).unwrap();
        let mut rng_init = Rng::new(15);
        let untrained = EncoderParams::init(config, 0.1, &mut rng_init).unwrap();
        let untrained_head = MlmHead::init(&config, &mut rng_init);
        let mut m1 = Rng::new(42);
        let mut m2 = Rng::new(42);
        let ppl_trained =
            masked_cross_entropy(&outcome.encoder, &outcome.head, &held_batch, 0.15, &mut m1)
                .unwrap()
                .exp();
        let ppl_untrained =
            masked_cross_entropy(&untrained, &untrained_head, &held_batch, 0.15, &mut m2)
                .unwrap()
                .exp();
        assert!(
            ppl_trained < ppl_untrained,
            "trained {ppl_trained} vs untrained {ppl_untrained}"
        );
    }
}
