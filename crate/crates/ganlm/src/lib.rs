//! Semi-supervised GAN fine-tuning for text classifiers at desk scale.
//!
//! A small trainable transformer encoder turns texts into sentence
//! embeddings, a generator forges embeddings from 100-dimensional Gaussian
//! noise, and a (k+1)-class discriminator learns the k task classes plus a
//! "generated" class. Trained jointly on a few labeled and many unlabeled
//! examples, the encoder + discriminator pair beats the same encoder trained
//! on the labeled examples alone. Everything runs on one CPU core over a
//! deterministic f64 autodiff engine, so results are reproducible bit for bit
//! under a fixed seed.
//!
//! The `examples/` directory has one runnable program per capability; the
//! `ganlm` binary wires the same library into a file-based pipeline
//! (`synth`, `split`, `pretrain`, `train-ssgan`, `train-supervised`, `eval`,
//! `predict`, ...).

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod tensor;
pub mod data;
pub mod encoder;
pub mod eval;
pub mod textnorm;

pub mod ssgan;

pub use error::{Error, Result};
