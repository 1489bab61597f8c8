//! Small trainable transformer encoder producing pooled sentence embeddings.
//!
//! Pre-norm residual blocks with multi-head self-attention and a GELU FFN,
//! additive masking on `[PAD]` key positions, and `[CLS]` final-hidden-state
//! pooling. Masked-language-model pretraining lives in [`mlm`]; a frozen
//! pass-through mode for imported embeddings is handled by the GAN trainer.

mod mlm;

pub use mlm::{mask_tokens, masked_cross_entropy, mlm_pretrain, MlmHead, MlmHyper, MlmOutcome};

use crate::data::EncodedBatch;
use crate::error::{Error, Result};
use crate::tensor::{Mode, Rng, Tape, Tensor};

/// Additive score for masked attention positions; exp() underflows to zero.
const MASKED_SCORE: f64 = -1e30;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub model_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
}

impl EncoderConfig {
    /// Defaults mirroring a small pretrained model: d=128, 2 layers, 4 heads.
    pub fn small(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            model_dim: 128,
            n_layers: 2,
            n_heads: 4,
            ffn_dim: 512,
            max_len: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("model_dim", self.model_dim),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("ffn_dim", self.ffn_dim),
            ("max_len", self.max_len),
        ];
        for (name, v) in dims {
            if v < 1 {
                return Err(Error::Config {
                    msg: format!("{name} must be at least 1"),
                });
            }
        }
        if self.model_dim % self.n_heads != 0 {
            return Err(Error::Config {
                msg: format!(
                    "model_dim {} not divisible by n_heads {}",
                    self.model_dim, self.n_heads
                ),
            });
        }
        Ok(())
    }

    /// Closed-form trainable parameter count for this configuration.
    pub fn param_count(&self) -> usize {
        let d = self.model_dim;
        let f = self.ffn_dim;
        let per_block = 2 * d            // ln1
            + 4 * (d * d + d)            // q, k, v, o projections
            + 2 * d                      // ln2
            + (d * f + f) + (f * d + d); // ffn
        self.vocab_size * d + self.max_len * d + self.n_layers * per_block + 2 * d
    }
}

/// Weight matrix plus bias vector.
#[derive(Debug, Clone)]
pub struct LinearParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LinearParams {
    pub fn init(rng: &mut Rng, fan_in: usize, fan_out: usize) -> Self {
        LinearParams {
            weight: Tensor::trunc_normal(rng, vec![fan_in, fan_out], 0.02),
            bias: Tensor::param(vec![fan_out], vec![0.0; fan_out]),
        }
    }

    pub fn apply(&self, tape: &mut Tape, x: &Tensor) -> Result<Tensor> {
        let h = tape.matmul(x, &self.weight)?;
        tape.add(&h, &self.bias)
    }

    pub fn params(&self) -> Vec<Tensor> {
        vec![self.weight.clone(), self.bias.clone()]
    }
}

#[derive(Debug, Clone)]
pub struct LayerNormParams {
    pub gain: Tensor,
    pub bias: Tensor,
}

impl LayerNormParams {
    pub fn init(dim: usize) -> Self {
        LayerNormParams {
            gain: Tensor::param(vec![dim], vec![1.0; dim]),
            bias: Tensor::param(vec![dim], vec![0.0; dim]),
        }
    }

    pub fn apply(&self, tape: &mut Tape, x: &Tensor) -> Result<Tensor> {
        tape.layer_norm(x, &self.gain, &self.bias)
    }

    pub fn params(&self) -> Vec<Tensor> {
        vec![self.gain.clone(), self.bias.clone()]
    }
}

/// One pre-norm transformer block.
#[derive(Debug, Clone)]
pub struct BlockParams {
    pub ln1: LayerNormParams,
    pub wq: LinearParams,
    pub wk: LinearParams,
    pub wv: LinearParams,
    pub wo: LinearParams,
    pub ln2: LayerNormParams,
    pub ffn1: LinearParams,
    pub ffn2: LinearParams,
}

impl BlockParams {
    fn init(rng: &mut Rng, d: usize, f: usize) -> Self {
        BlockParams {
            ln1: LayerNormParams::init(d),
            wq: LinearParams::init(rng, d, d),
            wk: LinearParams::init(rng, d, d),
            wv: LinearParams::init(rng, d, d),
            wo: LinearParams::init(rng, d, d),
            ln2: LayerNormParams::init(d),
            ffn1: LinearParams::init(rng, d, f),
            ffn2: LinearParams::init(rng, f, d),
        }
    }

    fn params(&self) -> Vec<Tensor> {
        let mut out = self.ln1.params();
        out.extend(self.wq.params());
        out.extend(self.wk.params());
        out.extend(self.wv.params());
        out.extend(self.wo.params());
        out.extend(self.ln2.params());
        out.extend(self.ffn1.params());
        out.extend(self.ffn2.params());
        out
    }
}

/// All trainable encoder parameters.
#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub token_embeddings: Tensor,
    pub position_embeddings: Tensor,
    pub blocks: Vec<BlockParams>,
    pub final_norm: LayerNormParams,
    pub dropout: f64,
}

impl EncoderParams {
    /// Truncated-normal init (std 0.02) for embeddings and projections,
    /// ones/zeros for layer norms.
    pub fn init(config: EncoderConfig, dropout: f64, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let d = config.model_dim;
        Ok(EncoderParams {
            config,
            token_embeddings: Tensor::trunc_normal(rng, vec![config.vocab_size, d], 0.02),
            position_embeddings: Tensor::trunc_normal(rng, vec![config.max_len, d], 0.02),
            blocks: (0..config.n_layers)
                .map(|_| BlockParams::init(rng, d, config.ffn_dim))
                .collect(),
            final_norm: LayerNormParams::init(d),
            dropout,
        })
    }

    /// Trainable tensors in declaration order (checkpoint and optimizer order).
    pub fn params(&self) -> Vec<Tensor> {
        let mut out = vec![
            self.token_embeddings.clone(),
            self.position_embeddings.clone(),
        ];
        for block in &self.blocks {
            out.extend(block.params());
        }
        out.extend(self.final_norm.params());
        out
    }
}

/// Forward pass over all positions: returns the `(b*len, d)` hidden matrix.
/// Used by MLM pretraining, which needs every position.
pub fn encode_positions(
    tape: &mut Tape,
    batch: &EncodedBatch,
    params: &EncoderParams,
    mode: Mode,
    rng: &mut Rng,
) -> Result<Tensor> {
    let cfg = &params.config;
    let (b, len) = (batch.n, batch.max_len);
    if len > cfg.max_len {
        return Err(Error::Contract(format!(
            "batch max_len {} exceeds encoder max_len {}",
            len, cfg.max_len
        )));
    }
    for &id in &batch.token_ids {
        if id >= cfg.vocab_size {
            return Err(Error::Index {
                what: "token id",
                index: id,
                limit: cfg.vocab_size,
            });
        }
    }
    let d = cfg.model_dim;
    let heads = cfg.n_heads;
    let dh = d / heads;

    let tok = tape.select_rows(&params.token_embeddings, &batch.token_ids)?;
    let pos_ids: Vec<usize> = (0..b * len).map(|i| i % len).collect();
    let pos = tape.select_rows(&params.position_embeddings, &pos_ids)?;
    let mut x = tape.add(&tok, &pos)?;
    x = tape.dropout(&x, params.dropout, rng, mode);

    // additive mask over key positions, shared by every layer and head
    let mut mask_values = vec![0.0; b * heads * len * len];
    for row in 0..b {
        for key in 0..len {
            if !batch.attention_mask[row * len + key] {
                for h in 0..heads {
                    for q in 0..len {
                        mask_values[((row * heads + h) * len + q) * len + key] = MASKED_SCORE;
                    }
                }
            }
        }
    }
    let attn_mask = Tensor::constant(vec![b * heads, len, len], mask_values);

    for block in &params.blocks {
        // attention sublayer
        let normed = block.ln1.apply(tape, &x)?;
        let q = block.wq.apply(tape, &normed)?;
        let q = split_heads(tape, &q, b, len, heads, dh)?;
        let k = block.wk.apply(tape, &normed)?;
        let k = split_heads(tape, &k, b, len, heads, dh)?;
        let v = block.wv.apply(tape, &normed)?;
        let v = split_heads(tape, &v, b, len, heads, dh)?;
        let kt = tape.transpose_last2(&k)?;
        let scores = tape.bmm(&q, &kt)?;
        let scores = tape.scale(&scores, 1.0 / (dh as f64).sqrt());
        let scores = tape.add(&scores, &attn_mask)?;
        let probs = tape.softmax(&scores, 2)?;
        let probs = tape.dropout(&probs, params.dropout, rng, mode);
        let context = tape.bmm(&probs, &v)?;
        let context = merge_heads(tape, &context, b, len, heads, dh)?;
        let attn_out = block.wo.apply(tape, &context)?;
        let attn_out = tape.dropout(&attn_out, params.dropout, rng, mode);
        x = tape.add(&x, &attn_out)?;

        // feed-forward sublayer
        let normed = block.ln2.apply(tape, &x)?;
        let h = block.ffn1.apply(tape, &normed)?;
        let h = tape.gelu(&h);
        let h = block.ffn2.apply(tape, &h)?;
        let h = tape.dropout(&h, params.dropout, rng, mode);
        x = tape.add(&x, &h)?;
    }

    params.final_norm.apply(tape, &x)
}

/// Pooled sentence embeddings: the final hidden state at each row's `[CLS]`
/// position, shape `(b, d)`.
pub fn encode_batch(
    tape: &mut Tape,
    batch: &EncodedBatch,
    params: &EncoderParams,
    mode: Mode,
    rng: &mut Rng,
) -> Result<Tensor> {
    let hidden = encode_positions(tape, batch, params, mode, rng)?;
    let cls_rows: Vec<usize> = (0..batch.n).map(|i| i * batch.max_len).collect();
    tape.select_rows(&hidden, &cls_rows)
}

/// Export the pooled embeddings of a split's three parts as
/// `<stem>.labeled.emb`, `<stem>.unlabeled.emb`, and `<stem>.test.emb`.
/// Labels travel with the labeled and test parts; the unlabeled part was
/// already erased at split time.
pub fn export_split_embeddings(
    split: &crate::data::DataSplit,
    vocab: &crate::data::Vocab,
    encoder: &EncoderParams,
    stem: &std::path::Path,
) -> Result<Vec<std::path::PathBuf>> {
    use crate::data::{encode_reviews, write_embeddings, EmbeddingRecord, Review};

    let embed_part = |reviews: &[Review]| -> Result<Vec<EmbeddingRecord>> {
        let mut records = Vec::with_capacity(reviews.len());
        let rows: Vec<usize> = (0..reviews.len()).collect();
        let encoded = encode_reviews(reviews, vocab, encoder.config.max_len, &[])?;
        for chunk in rows.chunks(64) {
            let batch = encoded.select(chunk);
            let mut tape = Tape::inference();
            let mut rng = Rng::new(0);
            let embeddings = encode_batch(&mut tape, &batch, encoder, Mode::Eval, &mut rng)?;
            let values = embeddings.to_vec();
            let d = encoder.config.model_dim;
            for (j, &row) in chunk.iter().enumerate() {
                records.push(EmbeddingRecord {
                    id: reviews[row].id.clone(),
                    label: reviews[row].label.clone(),
                    vector: values[j * d..(j + 1) * d].to_vec(),
                });
            }
        }
        Ok(records)
    };

    let stem_str = stem.to_string_lossy();
    let mut written = Vec::new();
    for (suffix, part) in [
        ("labeled", &split.labeled),
        ("unlabeled", &split.unlabeled),
        ("test", &split.test),
    ] {
        let path = std::path::PathBuf::from(format!("{stem_str}.{suffix}.emb"));
        write_embeddings(&path, &embed_part(part)?, encoder.config.model_dim)?;
        written.push(path);
    }
    Ok(written)
}

/// `(b*len, d)` -> `(b*heads, len, dh)`
fn split_heads(
    tape: &mut Tape,
    x: &Tensor,
    b: usize,
    len: usize,
    heads: usize,
    dh: usize,
) -> Result<Tensor> {
    let x = tape.reshape(x, vec![b, len, heads, dh])?;
    let x = tape.permute(&x, &[0, 2, 1, 3])?;
    tape.reshape(&x, vec![b * heads, len, dh])
}

/// `(b*heads, len, dh)` -> `(b*len, d)`
fn merge_heads(
    tape: &mut Tape,
    x: &Tensor,
    b: usize,
    len: usize,
    heads: usize,
    dh: usize,
) -> Result<Tensor> {
    let x = tape.reshape(x, vec![b, heads, len, dh])?;
    let x = tape.permute(&x, &[0, 2, 1, 3])?;
    tape.reshape(&x, vec![b * len, heads * dh])
}
