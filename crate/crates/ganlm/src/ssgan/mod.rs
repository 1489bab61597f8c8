//! Semi-supervised GAN head: generator, (k+1)-class discriminator, the
//! adversarial losses, the alternating training loop, and generator-free
//! inference.
//!
//! The discriminator emits k task-class logits plus one extra logit for the
//! "generated" class at index k. Its loss is the sum of a supervised term
//! (full (k+1)-way cross-entropy on labeled rows) and the unsupervised
//! real/fake terms; the generator minimizes feature matching against the
//! mean discriminator features of real data plus the usual fooling term.
//! After training, prediction uses only encoder + discriminator and never
//! lets the fake class win the argmax.

mod train;

pub use train::{
    train_ssgan, train_ssgan_embeddings, train_supervised, EpochRecord, SsganModel, TrainLog,
    TrainOutcome,
};

use crate::encoder::LinearParams;
use crate::error::{Error, Result};
use crate::tensor::{sample_gaussian, Mode, Rng, Tape, Tensor};

/// Negative slope of the GAN heads' leaky rectifiers.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Per-step loss components. All are nonnegative by construction.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub d_supervised: f64,
    pub d_unsup_real: f64,
    pub d_unsup_fake: f64,
    pub g_feature_matching: f64,
    pub g_unsup: f64,
}

impl LossBreakdown {
    pub fn d_total(&self) -> f64 {
        self.d_supervised + self.d_unsup_real + self.d_unsup_fake
    }

    pub fn g_total(&self) -> f64 {
        self.g_feature_matching + self.g_unsup
    }

    pub fn is_finite(&self) -> bool {
        self.d_supervised.is_finite()
            && self.d_unsup_real.is_finite()
            && self.d_unsup_fake.is_finite()
            && self.g_feature_matching.is_finite()
            && self.g_unsup.is_finite()
    }
}

/// Training hyperparameters of the GAN head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsganConfig {
    pub batch_size: usize,
    pub lr_d: f64,
    pub lr_g: f64,
    pub epochs: usize,
    pub noise_dim: usize,
    pub k: usize,
    pub seed: u64,
    pub dropout: f64,
    /// Leave encoder parameters untouched; embeddings are computed in eval
    /// mode and only the GAN heads train.
    pub freeze_encoder: bool,
}

impl Default for SsganConfig {
    fn default() -> Self {
        SsganConfig {
            batch_size: 16,
            lr_d: 5e-5,
            lr_g: 5e-5,
            epochs: 10,
            noise_dim: 100,
            k: 2,
            seed: 0,
            dropout: 0.1,
            freeze_encoder: false,
        }
    }
}

impl SsganConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config {
                msg: "batch_size must be at least 1".into(),
            });
        }
        if self.lr_d <= 0.0 || self.lr_g <= 0.0 {
            return Err(Error::Config {
                msg: format!("learning rates must be positive (lr_d {}, lr_g {})", self.lr_d, self.lr_g),
            });
        }
        if self.k < 2 {
            return Err(Error::Config {
                msg: format!("k must be at least 2, got {}", self.k),
            });
        }
        if self.noise_dim < 1 {
            return Err(Error::Config {
                msg: "noise_dim must be at least 1".into(),
            });
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config {
                msg: format!("dropout {} outside [0, 1)", self.dropout),
            });
        }
        Ok(())
    }
}

/// MLP mapping noise vectors to forged embeddings.
#[derive(Debug, Clone)]
pub struct GeneratorParams {
    pub hidden: LinearParams,
    pub output: LinearParams,
    pub noise_dim: usize,
    pub dropout: f64,
}

impl GeneratorParams {
    pub fn init(rng: &mut Rng, noise_dim: usize, hidden_dim: usize, embed_dim: usize, dropout: f64) -> Self {
        GeneratorParams {
            hidden: LinearParams::init(rng, noise_dim, hidden_dim),
            output: LinearParams::init(rng, hidden_dim, embed_dim),
            noise_dim,
            dropout,
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.output.bias.numel()
    }

    pub fn params(&self) -> Vec<Tensor> {
        let mut out = self.hidden.params();
        out.extend(self.output.params());
        out
    }

    /// G(z): hidden linear, leaky ReLU, dropout, output linear.
    pub fn forward(&self, tape: &mut Tape, z: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        let h = self.hidden.apply(tape, z)?;
        let h = tape.leaky_relu(&h, LEAKY_SLOPE);
        let h = tape.dropout(&h, self.dropout, rng, mode);
        self.output.apply(tape, &h)
    }
}

/// Draw n noise vectors and map them through the generator.
pub fn generate_fake(
    tape: &mut Tape,
    rng: &mut Rng,
    n: usize,
    generator: &GeneratorParams,
    mode: Mode,
) -> Result<Tensor> {
    let z = sample_gaussian(rng, vec![n, generator.noise_dim]);
    generator.forward(tape, &z, mode, rng)
}

/// MLP over embeddings emitting class logits; the hidden activations are the
/// feature vector used for feature matching. With `has_fake_class` the
/// output width is k+1 and index k is the generated/fake class; without it
/// this is a plain k-way classification head.
#[derive(Debug, Clone)]
pub struct DiscriminatorParams {
    pub hidden: LinearParams,
    pub output: LinearParams,
    pub k: usize,
    pub has_fake_class: bool,
    pub dropout: f64,
}

impl DiscriminatorParams {
    pub fn init(
        rng: &mut Rng,
        embed_dim: usize,
        hidden_dim: usize,
        k: usize,
        has_fake_class: bool,
        dropout: f64,
    ) -> Self {
        let n_outputs = k + usize::from(has_fake_class);
        DiscriminatorParams {
            hidden: LinearParams::init(rng, embed_dim, hidden_dim),
            output: LinearParams::init(rng, hidden_dim, n_outputs),
            k,
            has_fake_class,
            dropout,
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.hidden.weight.shape()[0]
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden.bias.numel()
    }

    pub fn n_outputs(&self) -> usize {
        self.k + usize::from(self.has_fake_class)
    }

    /// Index of the generated/fake class.
    pub fn fake_class(&self) -> Result<usize> {
        if !self.has_fake_class {
            return Err(Error::Contract(
                "this head has no generated/fake class".into(),
            ));
        }
        Ok(self.k)
    }

    pub fn params(&self) -> Vec<Tensor> {
        let mut out = self.hidden.params();
        out.extend(self.output.params());
        out
    }
}

/// Logits and features for a batch of embeddings.
pub fn discriminate(
    tape: &mut Tape,
    embeddings: &Tensor,
    disc: &DiscriminatorParams,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(Tensor, Tensor)> {
    let shape = embeddings.shape();
    if shape.len() != 2 || shape[1] != disc.embed_dim() {
        return Err(Error::Dimension {
            op: "discriminate",
            lhs: shape,
            rhs: vec![disc.embed_dim()],
        });
    }
    let h = disc.hidden.apply(tape, embeddings)?;
    let h = tape.leaky_relu(&h, LEAKY_SLOPE);
    let features = tape.dropout(&h, disc.dropout, rng, mode);
    let logits = disc.output.apply(tape, &features)?;
    Ok((logits, features))
}

/// L_D = L_sup + L_unsup where L_sup is the masked (k+1)-way cross-entropy
/// of labeled rows and L_unsup = -mean log(1 - p_fake(real)) - mean
/// log p_fake(fake).
pub fn discriminator_loss(
    tape: &mut Tape,
    logits_real: &Tensor,
    labels: &[i64],
    labeled_mask: &[bool],
    logits_fake: &Tensor,
    k: usize,
) -> Result<(Tensor, LossBreakdown)> {
    let sup = tape.cross_entropy_from_logits(logits_real, labels, labeled_mask)?;
    let real_classes: Vec<usize> = (0..k).collect();
    let unsup_real = tape.neg_mean_log_class_mass(logits_real, &real_classes)?;
    let unsup_fake = tape.neg_mean_log_class_mass(logits_fake, &[k])?;
    let partial = tape.add(&sup, &unsup_real)?;
    let total = tape.add(&partial, &unsup_fake)?;
    let breakdown = LossBreakdown {
        d_supervised: sup.item(),
        d_unsup_real: unsup_real.item(),
        d_unsup_fake: unsup_fake.item(),
        ..Default::default()
    };
    Ok((total, breakdown))
}

/// L_G = ||mean(f_real) - mean(f_fake)||^2 - mean log(1 - p_fake(fake)).
pub fn generator_loss(
    tape: &mut Tape,
    features_real: &Tensor,
    features_fake: &Tensor,
    logits_fake: &Tensor,
    k: usize,
) -> Result<(Tensor, LossBreakdown)> {
    if features_real.shape().last() != features_fake.shape().last() {
        return Err(Error::Dimension {
            op: "generator_loss",
            lhs: features_real.shape(),
            rhs: features_fake.shape(),
        });
    }
    let mean_real = tape.mean_axis0(features_real)?;
    let mean_fake = tape.mean_axis0(features_fake)?;
    let diff = tape.sub(&mean_real, &mean_fake)?;
    let feature_matching = tape.l2_norm_sq(&diff);
    let real_classes: Vec<usize> = (0..k).collect();
    let unsup = tape.neg_mean_log_class_mass(logits_fake, &real_classes)?;
    let total = tape.add(&feature_matching, &unsup)?;
    let breakdown = LossBreakdown {
        g_feature_matching: feature_matching.item(),
        g_unsup: unsup.item(),
        ..Default::default()
    };
    Ok((total, breakdown))
}

/// Argmax over the first k logits only (the fake class never wins), with
/// ties broken toward the lowest index. Probabilities are the softmax over
/// the first k logits, renormalized.
pub fn predict_from_logits(logits: &[f64], n_outputs: usize, k: usize) -> (usize, Vec<f64>) {
    debug_assert!(logits.len() == n_outputs && k <= n_outputs);
    let task = &logits[..k];
    let mut best = 0;
    for (i, &v) in task.iter().enumerate() {
        if v > task[best] {
            best = i;
        }
    }
    let max = task.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = task.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    (best, exps.iter().map(|&e| e / sum).collect())
}

/// Classify a batch of embeddings with a trained discriminator. Generator
/// parameters are never consulted.
pub fn predict_embeddings(
    embeddings: &Tensor,
    disc: &DiscriminatorParams,
    classes: &[String],
) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    if disc.k != classes.len() {
        return Err(Error::Contract(format!(
            "discriminator has k={} but {} class names given",
            disc.k,
            classes.len()
        )));
    }
    let mut tape = Tape::inference();
    let mut rng = Rng::new(0);
    let (logits, _) = discriminate(&mut tape, embeddings, disc, Mode::Eval, &mut rng)?;
    let values = logits.to_vec();
    let n_out = disc.n_outputs();
    let mut labels = Vec::with_capacity(embeddings.shape()[0]);
    let mut probs = Vec::with_capacity(labels.capacity());
    for row in values.chunks(n_out) {
        let (class, p) = predict_from_logits(row, n_out, disc.k);
        labels.push(classes[class].clone());
        probs.push(p);
    }
    Ok((labels, probs))
}
