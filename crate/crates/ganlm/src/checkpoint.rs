//! Binary parameter checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic   8 bytes  "GANLMCKP"
//! version 1 byte   (currently 1)
//! flags   1 byte   bit0 encoder, bit1 generator, bit2 head, bit3 head-has-fake-class
//! classes u32 count, then per class u32 byte-length + UTF-8 bytes
//! [encoder]   6 x u32 (vocab_size, model_dim, n_layers, n_heads, ffn_dim,
//!             max_len), f64 dropout, then parameter tensors
//! [generator] 3 x u32 (noise_dim, hidden_dim, embed_dim), f64 dropout,
//!             then parameter tensors
//! [head]      3 x u32 (embed_dim, hidden_dim, k), f64 dropout, then tensors
//! ```
//!
//! Tensors are raw f64 values in each component's declaration order; their
//! sizes are derived from the config block, so the layout is self-describing.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::encoder::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::ssgan::{DiscriminatorParams, GeneratorParams, SsganModel};
use crate::tensor::{Rng, Tensor};

const MAGIC: &[u8; 8] = b"GANLMCKP";
const VERSION: u8 = 1;

const FLAG_ENCODER: u8 = 1;
const FLAG_GENERATOR: u8 = 1 << 1;
const FLAG_HEAD: u8 = 1 << 2;
const FLAG_FAKE_CLASS: u8 = 1 << 3;

/// What a checkpoint file holds. An encoder-only checkpoint is what
/// pretraining emits; a full model adds the head and usually the generator.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub encoder: Option<EncoderParams>,
    pub generator: Option<GeneratorParams>,
    pub head: Option<DiscriminatorParams>,
    pub classes: Vec<String>,
}

impl Checkpoint {
    pub fn from_model(model: &SsganModel) -> Self {
        Checkpoint {
            encoder: model.encoder.clone(),
            generator: model.generator.clone(),
            head: Some(model.discriminator.clone()),
            classes: model.classes.clone(),
        }
    }

    pub fn encoder_only(encoder: EncoderParams) -> Self {
        Checkpoint {
            encoder: Some(encoder),
            generator: None,
            head: None,
            classes: Vec::new(),
        }
    }

    /// Reassemble a model; fails if the head is missing.
    pub fn into_model(self) -> Result<SsganModel> {
        let head = self.head.ok_or_else(|| Error::Contract(
            "checkpoint holds no classification head (encoder-only checkpoint?)".into(),
        ))?;
        Ok(SsganModel {
            encoder: self.encoder,
            generator: self.generator,
            discriminator: head,
            classes: self.classes,
        })
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&[VERSION])?;
    let mut flags = 0u8;
    if ckpt.encoder.is_some() {
        flags |= FLAG_ENCODER;
    }
    if ckpt.generator.is_some() {
        flags |= FLAG_GENERATOR;
    }
    if let Some(head) = &ckpt.head {
        flags |= FLAG_HEAD;
        if head.has_fake_class {
            flags |= FLAG_FAKE_CLASS;
        }
    }
    out.write_all(&[flags])?;

    write_u32(&mut out, ckpt.classes.len() as u32)?;
    for class in &ckpt.classes {
        write_u32(&mut out, class.len() as u32)?;
        out.write_all(class.as_bytes())?;
    }

    if let Some(encoder) = &ckpt.encoder {
        let c = &encoder.config;
        for v in [c.vocab_size, c.model_dim, c.n_layers, c.n_heads, c.ffn_dim, c.max_len] {
            write_u32(&mut out, v as u32)?;
        }
        write_f64(&mut out, encoder.dropout)?;
        write_tensors(&mut out, &encoder.params())?;
    }
    if let Some(generator) = &ckpt.generator {
        let hidden_dim = generator.hidden.bias.numel();
        for v in [generator.noise_dim, hidden_dim, generator.embed_dim()] {
            write_u32(&mut out, v as u32)?;
        }
        write_f64(&mut out, generator.dropout)?;
        write_tensors(&mut out, &generator.params())?;
    }
    if let Some(head) = &ckpt.head {
        for v in [head.embed_dim(), head.hidden_dim(), head.k] {
            write_u32(&mut out, v as u32)?;
        }
        write_f64(&mut out, head.dropout)?;
        write_tensors(&mut out, &head.params())?;
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let display = path.display().to_string();
    let bad = |msg: String| Error::Format {
        path: display.clone(),
        msg,
    };
    let mut input = BufReader::new(std::fs::File::open(path)?);

    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint file (bad magic)".into()));
    }
    let version = read_u8(&mut input)?;
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let flags = read_u8(&mut input)?;

    let n_classes = read_u32(&mut input)? as usize;
    let mut classes = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        let len = read_u32(&mut input)? as usize;
        let mut buf = vec![0u8; len];
        input.read_exact(&mut buf)?;
        classes.push(String::from_utf8(buf).map_err(|_| bad("class name is not UTF-8".into()))?);
    }

    let encoder = if flags & FLAG_ENCODER != 0 {
        let dims: Vec<usize> = (0..6)
            .map(|_| read_u32(&mut input).map(|v| v as usize))
            .collect::<Result<_>>()?;
        let config = EncoderConfig {
            vocab_size: dims[0],
            model_dim: dims[1],
            n_layers: dims[2],
            n_heads: dims[3],
            ffn_dim: dims[4],
            max_len: dims[5],
        };
        config.validate()?;
        let dropout = read_f64(&mut input)?;
        // template with the right shapes, then overwrite every tensor
        let mut rng = Rng::new(0);
        let params = EncoderParams::init(config, dropout, &mut rng)?;
        read_tensors(&mut input, &params.params(), &display)?;
        Some(params)
    } else {
        None
    };

    let generator = if flags & FLAG_GENERATOR != 0 {
        let noise_dim = read_u32(&mut input)? as usize;
        let hidden_dim = read_u32(&mut input)? as usize;
        let embed_dim = read_u32(&mut input)? as usize;
        let dropout = read_f64(&mut input)?;
        let mut rng = Rng::new(0);
        let params = GeneratorParams::init(&mut rng, noise_dim, hidden_dim, embed_dim, dropout);
        read_tensors(&mut input, &params.params(), &display)?;
        Some(params)
    } else {
        None
    };

    let head = if flags & FLAG_HEAD != 0 {
        let embed_dim = read_u32(&mut input)? as usize;
        let hidden_dim = read_u32(&mut input)? as usize;
        let k = read_u32(&mut input)? as usize;
        let dropout = read_f64(&mut input)?;
        let has_fake_class = flags & FLAG_FAKE_CLASS != 0;
        let mut rng = Rng::new(0);
        let params =
            DiscriminatorParams::init(&mut rng, embed_dim, hidden_dim, k, has_fake_class, dropout);
        read_tensors(&mut input, &params.params(), &display)?;
        Some(params)
    } else {
        None
    };

    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(bad("trailing bytes after the last tensor".into()));
    }

    Ok(Checkpoint {
        encoder,
        generator,
        head,
        classes,
    })
}

fn write_u32<W: Write>(out: &mut W, v: u32) -> Result<()> {
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64<W: Write>(out: &mut W, v: f64) -> Result<()> {
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_tensors<W: Write>(out: &mut W, tensors: &[Tensor]) -> Result<()> {
    for t in tensors {
        for v in t.values().iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u8<R: Read>(input: &mut R) -> Result<u8> {
    let mut buf = [0u8; 1];
    input.read_exact(&mut buf)?;
    Ok(buf[0])
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64<R: Read>(input: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_tensors<R: Read>(input: &mut R, tensors: &[Tensor], path: &str) -> Result<()> {
    for t in tensors {
        let mut values = vec![0.0f64; t.numel()];
        let mut buf = [0u8; 8];
        for v in values.iter_mut() {
            input.read_exact(&mut buf).map_err(|_| Error::Format {
                path: path.to_string(),
                msg: "checkpoint truncated mid-tensor".into(),
            })?;
            *v = f64::from_le_bytes(buf);
        }
        t.set_values(&values)?;
    }
    Ok(())
}
