//! Alternating GAN training, the supervised baseline, and evaluation.
//!
//! One step per batch: (1) forward the encoder on the real batch, (2) draw
//! one noise batch of equal size, (3) compute L_D, backward, update the
//! discriminator and (unless frozen) the encoder, (4) re-run the forward
//! passes against the updated weights — same noise, fresh dropout — compute
//! L_G, backward, update the generator only. A non-finite loss aborts with
//! the partial training log.

use std::io::Write;
use std::path::Path;

use crate::data::{encode_reviews, DataSplit, EmbeddingRecord, EncodedBatch, Vocab};
use crate::encoder::{encode_batch, EncoderParams};
use crate::error::{Error, Result};
use crate::eval::{compute_metrics, format_metric, MetricsReport};
use crate::tensor::{sample_gaussian, zero_grads, AdamW, AdamWConfig, Mode, Rng, Tape, Tensor};

use super::{
    discriminate, discriminator_loss, generator_loss, predict_embeddings, DiscriminatorParams,
    GeneratorParams, LossBreakdown, SsganConfig,
};

/// A trained classifier: encoder (absent in imported-embeddings mode),
/// discriminator or plain head, and optionally the generator.
#[derive(Debug, Clone)]
pub struct SsganModel {
    pub encoder: Option<EncoderParams>,
    pub generator: Option<GeneratorParams>,
    pub discriminator: DiscriminatorParams,
    pub classes: Vec<String>,
}

impl SsganModel {
    /// Classify reviews already encoded as a batch.
    pub fn predict_batch(&self, batch: &EncodedBatch) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
        let encoder = self.encoder.as_ref().ok_or_else(|| {
            Error::Contract("model has no encoder; predict from embeddings instead".into())
        })?;
        let mut tape = Tape::inference();
        let mut rng = Rng::new(0);
        let embeddings = encode_batch(&mut tape, batch, encoder, Mode::Eval, &mut rng)?;
        predict_embeddings(&embeddings, &self.discriminator, &self.classes)
    }

    /// Classify raw embedding vectors.
    pub fn predict_vectors(&self, vectors: &[Vec<f64>]) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
        let d = self.discriminator.embed_dim();
        let mut values = Vec::with_capacity(vectors.len() * d);
        for v in vectors {
            if v.len() != d {
                return Err(Error::Dimension {
                    op: "predict_vectors",
                    lhs: vec![v.len()],
                    rhs: vec![d],
                });
            }
            values.extend_from_slice(v);
        }
        let embeddings = Tensor::constant(vec![vectors.len(), d], values);
        predict_embeddings(&embeddings, &self.discriminator, &self.classes)
    }
}

/// Losses and test metrics for one epoch.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub losses: LossBreakdown,
    pub metrics: MetricsReport,
}

/// Per-epoch training history; the data behind accuracy-vs-epoch curves.
#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "epoch,d_sup,d_unsup_real,d_unsup_fake,g_feat,g_unsup,test_accuracy,test_precision,test_recall,test_f1\n",
        );
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.5},{:.5},{:.5},{:.5},{:.5},{:.5},{},{},{}\n",
                r.epoch,
                r.losses.d_supervised,
                r.losses.d_unsup_real,
                r.losses.d_unsup_fake,
                r.losses.g_feature_matching,
                r.losses.g_unsup,
                r.metrics.accuracy,
                format_metric(r.metrics.precision),
                format_metric(r.metrics.recall),
                format_metric(r.metrics.f1),
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.metrics.accuracy).collect()
    }
}

/// Result of a training run. `diverged` carries the offending loss
/// breakdown when training aborted on a non-finite loss; the log then holds
/// the epochs completed before the abort.
#[derive(Debug)]
pub struct TrainOutcome {
    pub model: SsganModel,
    pub log: TrainLog,
    pub diverged: Option<LossBreakdown>,
}

/// Where a step's real embeddings come from.
enum StepInput<'a> {
    Text {
        batch: &'a EncodedBatch,
        encoder: &'a EncoderParams,
        freeze: bool,
    },
    Embeddings(&'a Tensor),
}

impl StepInput<'_> {
    fn forward(&self, tape: &mut Tape, rng: &mut Rng) -> Result<Tensor> {
        match self {
            StepInput::Text {
                batch,
                encoder,
                freeze,
            } => {
                if *freeze {
                    let mut inert = Tape::inference();
                    encode_batch(&mut inert, batch, encoder, Mode::Eval, rng)
                } else {
                    encode_batch(tape, batch, encoder, Mode::Train, rng)
                }
            }
            StepInput::Embeddings(e) => Ok((*e).clone()),
        }
    }

    /// Detached forward for the generator phase.
    fn forward_detached(&self, rng: &mut Rng) -> Result<Tensor> {
        let mut inert = Tape::inference();
        match self {
            StepInput::Text {
                batch,
                encoder,
                freeze,
            } => {
                let mode = if *freeze { Mode::Eval } else { Mode::Train };
                encode_batch(&mut inert, batch, encoder, mode, rng)
            }
            StepInput::Embeddings(e) => Ok((*e).clone()),
        }
    }
}

/// One alternating update. Returns the step's loss breakdown.
#[allow(clippy::too_many_arguments)]
fn train_step(
    input: &StepInput,
    labels: &[i64],
    labeled_mask: &[bool],
    generator: &GeneratorParams,
    disc: &DiscriminatorParams,
    d_params: &[Tensor],
    g_params: &[Tensor],
    opt_d: &mut AdamW,
    opt_g: &mut AdamW,
    rng: &mut Rng,
) -> Result<LossBreakdown> {
    // discriminator (+ encoder) phase
    zero_grads(d_params);
    zero_grads(g_params);
    let mut tape = Tape::new();
    let real = input.forward(&mut tape, rng)?;
    let n = real.shape()[0];
    let noise = sample_gaussian(rng, vec![n, generator.noise_dim]);
    let fake = {
        let mut inert = Tape::inference();
        generator.forward(&mut inert, &noise, Mode::Train, rng)?
    };
    let (logits_real, _) = discriminate(&mut tape, &real, disc, Mode::Train, rng)?;
    let (logits_fake, _) = discriminate(&mut tape, &fake, disc, Mode::Train, rng)?;
    let (d_loss, d_parts) =
        discriminator_loss(&mut tape, &logits_real, labels, labeled_mask, &logits_fake, disc.k)?;
    if !d_parts.is_finite() {
        return Err(Error::Divergence { breakdown: d_parts });
    }
    tape.backward(&d_loss)?;
    opt_d.step(d_params)?;

    // generator phase: same noise, fresh passes against updated weights
    zero_grads(d_params);
    zero_grads(g_params);
    let mut tape = Tape::new();
    let real = input.forward_detached(rng)?;
    let feat_real = {
        let mut inert = Tape::inference();
        let (_, features) = discriminate(&mut inert, &real, disc, Mode::Train, rng)?;
        features
    };
    let fake = generator.forward(&mut tape, &noise, Mode::Train, rng)?;
    let (logits_fake, feat_fake) = discriminate(&mut tape, &fake, disc, Mode::Train, rng)?;
    let (g_loss, g_parts) =
        generator_loss(&mut tape, &feat_real, &feat_fake, &logits_fake, disc.k)?;
    let breakdown = LossBreakdown {
        d_supervised: d_parts.d_supervised,
        d_unsup_real: d_parts.d_unsup_real,
        d_unsup_fake: d_parts.d_unsup_fake,
        g_feature_matching: g_parts.g_feature_matching,
        g_unsup: g_parts.g_unsup,
    };
    if !breakdown.is_finite() {
        return Err(Error::Divergence { breakdown });
    }
    tape.backward(&g_loss)?;
    opt_g.step(g_params)?;
    Ok(breakdown)
}

/// Evaluate a text-mode model on an encoded test batch.
fn evaluate_text(
    encoder: &EncoderParams,
    disc: &DiscriminatorParams,
    classes: &[String],
    test: &EncodedBatch,
    positive_class: &str,
) -> Result<MetricsReport> {
    let mut predictions = Vec::with_capacity(test.n);
    let rows: Vec<usize> = (0..test.n).collect();
    for chunk in rows.chunks(64) {
        let batch = test.select(chunk);
        let mut tape = Tape::inference();
        let mut rng = Rng::new(0);
        let embeddings = encode_batch(&mut tape, &batch, encoder, Mode::Eval, &mut rng)?;
        let (labels, _) = predict_embeddings(&embeddings, disc, classes)?;
        predictions.extend(labels);
    }
    let gold = gold_labels(test, classes)?;
    compute_metrics(&predictions, &gold, positive_class)
}

fn gold_labels(batch: &EncodedBatch, classes: &[String]) -> Result<Vec<String>> {
    batch
        .labels
        .iter()
        .map(|&l| {
            usize::try_from(l)
                .ok()
                .and_then(|i| classes.get(i))
                .cloned()
                .ok_or_else(|| Error::Contract("test batch contains unlabeled rows".into()))
        })
        .collect()
}

/// Train the SS-GAN on a split: the encoder (unless frozen), a fresh
/// generator, and a fresh (k+1)-class discriminator. Evaluates on the test
/// part after every epoch.
pub fn train_ssgan(
    split: &DataSplit,
    vocab: &Vocab,
    classes: &[String],
    encoder: EncoderParams,
    config: &SsganConfig,
    positive_class: &str,
    rng: &mut Rng,
) -> Result<TrainOutcome> {
    config.validate()?;
    if config.k != classes.len() {
        return Err(Error::Config {
            msg: format!("config k={} but {} classes declared", config.k, classes.len()),
        });
    }
    let max_len = encoder.config.max_len;
    let mut union = split.labeled.clone();
    union.extend(split.unlabeled.iter().cloned());
    let union_batch = encode_reviews(&union, vocab, max_len, classes)?;
    let test_batch = encode_reviews(&split.test, vocab, max_len, classes)?;

    let d = encoder.config.model_dim;
    let generator = GeneratorParams::init(rng, config.noise_dim, d, d, config.dropout);
    let disc = DiscriminatorParams::init(rng, d, d, config.k, true, config.dropout);

    let mut d_params = if config.freeze_encoder {
        Vec::new()
    } else {
        encoder.params()
    };
    d_params.extend(disc.params());
    let g_params = generator.params();
    let mut opt_d = AdamW::new(AdamWConfig::with_lr(config.lr_d), &d_params);
    let mut opt_g = AdamW::new(AdamWConfig::with_lr(config.lr_g), &g_params);

    let encoder_snapshot: Option<Vec<Vec<f64>>> = config
        .freeze_encoder
        .then(|| encoder.params().iter().map(Tensor::to_vec).collect());

    let mut log = TrainLog::default();
    let mut diverged = None;
    'epochs: for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..union_batch.n).collect();
        rng.shuffle(&mut order);
        let mut sums = LossBreakdown::default();
        let mut steps = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch = union_batch.select(chunk);
            let input = StepInput::Text {
                batch: &batch,
                encoder: &encoder,
                freeze: config.freeze_encoder,
            };
            match train_step(
                &input,
                &batch.labels,
                &batch.labeled_mask,
                &generator,
                &disc,
                &d_params,
                &g_params,
                &mut opt_d,
                &mut opt_g,
                rng,
            ) {
                Ok(parts) => {
                    sums.d_supervised += parts.d_supervised;
                    sums.d_unsup_real += parts.d_unsup_real;
                    sums.d_unsup_fake += parts.d_unsup_fake;
                    sums.g_feature_matching += parts.g_feature_matching;
                    sums.g_unsup += parts.g_unsup;
                    steps += 1;
                }
                Err(Error::Divergence { breakdown }) => {
                    diverged = Some(breakdown);
                    break 'epochs;
                }
                Err(other) => return Err(other),
            }
        }
        let scale = 1.0 / steps.max(1) as f64;
        let losses = LossBreakdown {
            d_supervised: sums.d_supervised * scale,
            d_unsup_real: sums.d_unsup_real * scale,
            d_unsup_fake: sums.d_unsup_fake * scale,
            g_feature_matching: sums.g_feature_matching * scale,
            g_unsup: sums.g_unsup * scale,
        };
        let metrics = evaluate_text(&encoder, &disc, classes, &test_batch, positive_class)?;
        log.records.push(EpochRecord {
            epoch,
            losses,
            metrics,
        });
    }

    if let Some(snapshot) = encoder_snapshot {
        for (param, original) in encoder.params().iter().zip(snapshot.iter()) {
            debug_assert_eq!(&param.to_vec(), original, "frozen encoder moved");
        }
    }

    Ok(TrainOutcome {
        model: SsganModel {
            encoder: Some(encoder),
            generator: Some(generator),
            discriminator: disc,
            classes: classes.to_vec(),
        },
        log,
        diverged,
    })
}

/// Train the SS-GAN heads on imported embeddings; no encoder exists at all.
pub fn train_ssgan_embeddings(
    labeled: &[EmbeddingRecord],
    unlabeled: &[EmbeddingRecord],
    test: &[EmbeddingRecord],
    classes: &[String],
    config: &SsganConfig,
    positive_class: &str,
    rng: &mut Rng,
) -> Result<TrainOutcome> {
    config.validate()?;
    if config.k != classes.len() {
        return Err(Error::Config {
            msg: format!("config k={} but {} classes declared", config.k, classes.len()),
        });
    }
    let d = labeled
        .first()
        .or(unlabeled.first())
        .map(|r| r.vector.len())
        .ok_or_else(|| Error::Contract("no training embeddings given".into()))?;

    let to_rows = |records: &[EmbeddingRecord]| -> Result<(Vec<Vec<f64>>, Vec<i64>)> {
        let mut rows = Vec::with_capacity(records.len());
        let mut labels = Vec::with_capacity(records.len());
        for r in records {
            if r.vector.len() != d {
                return Err(Error::Format {
                    path: String::new(),
                    msg: format!("embedding {:?} has dimension {}, expected {d}", r.id, r.vector.len()),
                });
            }
            rows.push(r.vector.clone());
            let label = match &r.label {
                Some(name) => classes
                    .iter()
                    .position(|c| c == name)
                    .map(|i| i as i64)
                    .ok_or_else(|| Error::Contract(format!("label {name:?} not in class set")))?,
                None => -1,
            };
            labels.push(label);
        }
        Ok((rows, labels))
    };
    let (labeled_rows, labeled_ids) = to_rows(labeled)?;
    let (unlabeled_rows, _) = to_rows(unlabeled)?;
    let (test_rows, test_ids) = to_rows(test)?;
    if test_ids.iter().any(|&l| l < 0) {
        return Err(Error::Contract("test embeddings must be labeled".into()));
    }

    let mut rows = labeled_rows;
    let mut labels = labeled_ids;
    rows.extend(unlabeled_rows);
    labels.extend(std::iter::repeat_n(-1i64, rows.len() - labels.len()));

    let generator = GeneratorParams::init(rng, config.noise_dim, d, d, config.dropout);
    let disc = DiscriminatorParams::init(rng, d, d, config.k, true, config.dropout);
    let d_params = disc.params();
    let g_params = generator.params();
    let mut opt_d = AdamW::new(AdamWConfig::with_lr(config.lr_d), &d_params);
    let mut opt_g = AdamW::new(AdamWConfig::with_lr(config.lr_g), &g_params);

    let mut log = TrainLog::default();
    let mut diverged = None;
    'epochs: for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..rows.len()).collect();
        rng.shuffle(&mut order);
        let mut sums = LossBreakdown::default();
        let mut steps = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let mut values = Vec::with_capacity(chunk.len() * d);
            let mut batch_labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                values.extend_from_slice(&rows[i]);
                batch_labels.push(labels[i]);
            }
            let embeddings = Tensor::constant(vec![chunk.len(), d], values);
            let mask: Vec<bool> = batch_labels.iter().map(|&l| l >= 0).collect();
            let input = StepInput::Embeddings(&embeddings);
            match train_step(
                &input,
                &batch_labels,
                &mask,
                &generator,
                &disc,
                &d_params,
                &g_params,
                &mut opt_d,
                &mut opt_g,
                rng,
            ) {
                Ok(parts) => {
                    sums.d_supervised += parts.d_supervised;
                    sums.d_unsup_real += parts.d_unsup_real;
                    sums.d_unsup_fake += parts.d_unsup_fake;
                    sums.g_feature_matching += parts.g_feature_matching;
                    sums.g_unsup += parts.g_unsup;
                    steps += 1;
                }
                Err(Error::Divergence { breakdown }) => {
                    diverged = Some(breakdown);
                    break 'epochs;
                }
                Err(other) => return Err(other),
            }
        }
        let scale = 1.0 / steps.max(1) as f64;
        let losses = LossBreakdown {
            d_supervised: sums.d_supervised * scale,
            d_unsup_real: sums.d_unsup_real * scale,
            d_unsup_fake: sums.d_unsup_fake * scale,
            g_feature_matching: sums.g_feature_matching * scale,
            g_unsup: sums.g_unsup * scale,
        };

        let mut test_values = Vec::with_capacity(test_rows.len() * d);
        for row in &test_rows {
            test_values.extend_from_slice(row);
        }
        let test_tensor = Tensor::constant(vec![test_rows.len(), d], test_values);
        let (predictions, _) = predict_embeddings(&test_tensor, &disc, classes)?;
        let gold: Vec<String> = test_ids
            .iter()
            .map(|&l| classes[l as usize].clone())
            .collect();
        let metrics = compute_metrics(&predictions, &gold, positive_class)?;
        log.records.push(EpochRecord {
            epoch,
            losses,
            metrics,
        });
    }

    Ok(TrainOutcome {
        model: SsganModel {
            encoder: None,
            generator: Some(generator),
            discriminator: disc,
            classes: classes.to_vec(),
        },
        log,
        diverged,
    })
}

/// Supervised baseline: the same encoder with a plain k-way head, trained on
/// the labeled part only. Consumes the same split files as [`train_ssgan`],
/// so the comparison is a pure head-to-head.
pub fn train_supervised(
    split: &DataSplit,
    vocab: &Vocab,
    classes: &[String],
    encoder: EncoderParams,
    config: &SsganConfig,
    positive_class: &str,
    rng: &mut Rng,
) -> Result<TrainOutcome> {
    config.validate()?;
    if config.k != classes.len() {
        return Err(Error::Config {
            msg: format!("config k={} but {} classes declared", config.k, classes.len()),
        });
    }
    let max_len = encoder.config.max_len;
    let train_batch = encode_reviews(&split.labeled, vocab, max_len, classes)?;
    let test_batch = encode_reviews(&split.test, vocab, max_len, classes)?;
    if !train_batch.labeled_mask.iter().all(|&m| m) {
        return Err(Error::Contract(
            "supervised baseline requires every training row to be labeled".into(),
        ));
    }

    let d = encoder.config.model_dim;
    let head = DiscriminatorParams::init(rng, d, d, config.k, false, config.dropout);
    let mut params = encoder.params();
    params.extend(head.params());
    let mut optimizer = AdamW::new(AdamWConfig::with_lr(config.lr_d), &params);

    let mut log = TrainLog::default();
    let mut diverged = None;
    'epochs: for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train_batch.n).collect();
        rng.shuffle(&mut order);
        let mut total = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch = train_batch.select(chunk);
            zero_grads(&params);
            let mut tape = Tape::new();
            let embeddings = encode_batch(&mut tape, &batch, &encoder, Mode::Train, rng)?;
            let (logits, _) = discriminate(&mut tape, &embeddings, &head, Mode::Train, rng)?;
            let loss = tape.cross_entropy_from_logits(&logits, &batch.labels, &batch.labeled_mask)?;
            let loss_value = loss.item();
            if !loss_value.is_finite() {
                diverged = Some(LossBreakdown {
                    d_supervised: loss_value,
                    ..Default::default()
                });
                break 'epochs;
            }
            tape.backward(&loss)?;
            optimizer.step(&params)?;
            total += loss_value;
            steps += 1;
        }
        let losses = LossBreakdown {
            d_supervised: total / steps.max(1) as f64,
            ..Default::default()
        };
        let metrics = evaluate_text(&encoder, &head, classes, &test_batch, positive_class)?;
        log.records.push(EpochRecord {
            epoch,
            losses,
            metrics,
        });
    }

    Ok(TrainOutcome {
        model: SsganModel {
            encoder: Some(encoder),
            generator: None,
            discriminator: head,
            classes: classes.to_vec(),
        },
        log,
        diverged,
    })
}
