//! Run configuration: plain-text `key = value` files with `[section]`
//! headers, expanded presets, and defaults.
//!
//! An empty file yields the stock defaults (model_dim 128, batch 16,
//! lr 5e-5, noise_dim 100). A `preset = table2-<n>` line expands to that
//! experimental-grid row (labeled count n, 512 unlabeled, 512 test — 128
//! test for the 1024 row) with batch size 16 and learning rate 5e-5;
//! explicit keys anywhere in the file override the preset. Unknown sections
//! or keys are rejected with their line number.

use std::path::{Path, PathBuf};

use crate::data::SplitSpec;
use crate::encoder::{EncoderConfig, MlmHyper};
use crate::error::{Error, Result};
use crate::ssgan::SsganConfig;
use crate::textnorm::NormalizerConfig;

/// Synthetic-corpus controls (the `synth` subcommand).
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_per_class: usize,
    pub text_len: usize,
    pub shared_vocab: usize,
    pub n_markers: usize,
    pub marker_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_per_class: 600,
            text_len: 64,
            shared_vocab: 500,
            n_markers: 16,
            marker_rate: 0.3,
            seed: 0,
        }
    }
}

/// Encoder shape without the vocabulary size, which is only known once a
/// vocabulary file exists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderSettings {
    pub model_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub dropout: f64,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        EncoderSettings {
            model_dim: 128,
            n_layers: 2,
            n_heads: 4,
            ffn_dim: 512,
            max_len: 64,
            dropout: 0.1,
        }
    }
}

impl EncoderSettings {
    pub fn with_vocab(self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            model_dim: self.model_dim,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            ffn_dim: self.ffn_dim,
            max_len: self.max_len,
        }
    }
}

/// Everything a pipeline run needs, file-configurable.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub corpus: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub init_checkpoint: Option<PathBuf>,
    pub classes: Vec<String>,
    pub positive_class: String,
    pub max_vocab: usize,
    pub min_freq: usize,
    pub normalizer: NormalizerConfig,
    pub encoder: EncoderSettings,
    pub ssgan: SsganConfig,
    pub split: SplitSpec,
    pub synth: SynthConfig,
    pub pretrain: MlmHyper,
    pub pretrain_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: None,
            corpus: None,
            vocab: None,
            out_dir: PathBuf::from("out"),
            init_checkpoint: None,
            classes: crate::data::default_classes(),
            positive_class: "fake".to_string(),
            max_vocab: 5000,
            min_freq: 1,
            normalizer: NormalizerConfig::default(),
            encoder: EncoderSettings::default(),
            ssgan: SsganConfig::default(),
            split: SplitSpec::new(32, 512, 512, 0),
            synth: SynthConfig::default(),
            pretrain: MlmHyper::default(),
            pretrain_seed: 0,
        }
    }
}

/// The experimental grid rows: labeled count, unlabeled count, test count.
pub const PRESETS: [(&str, usize, usize, usize); 6] = [
    ("table2-32", 32, 512, 512),
    ("table2-64", 64, 512, 512),
    ("table2-128", 128, 512, 512),
    ("table2-256", 256, 512, 512),
    ("table2-512", 512, 512, 512),
    ("table2-1024", 1024, 512, 128),
];

impl RunConfig {
    /// Expand a preset over this config: the grid row's split sizes plus
    /// batch size 16 and learning rate 5e-5 for both networks.
    pub fn apply_preset(&mut self, name: &str) -> Result<()> {
        let (_, n_labeled, n_unlabeled, n_test) = PRESETS
            .iter()
            .find(|(p, ..)| *p == name)
            .copied()
            .ok_or_else(|| Error::Config {
                msg: format!(
                    "unknown preset {name:?}; available: {}",
                    PRESETS.map(|(p, ..)| p).join(", ")
                ),
            })?;
        self.preset = Some(name.to_string());
        self.split.n_labeled = n_labeled;
        self.split.n_unlabeled = n_unlabeled;
        self.split.n_test = n_test;
        self.ssgan.batch_size = 16;
        self.ssgan.lr_d = 5e-5;
        self.ssgan.lr_g = 5e-5;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.ssgan.validate()?;
        self.normalizer.validate()?;
        if self.classes.len() < 2 {
            return Err(Error::Config {
                msg: "need at least 2 classes".into(),
            });
        }
        if !self.classes.contains(&self.positive_class) {
            return Err(Error::Config {
                msg: format!(
                    "positive_class {:?} not among classes {:?}",
                    self.positive_class, self.classes
                ),
            });
        }
        Ok(())
    }
}

/// Parse a config file. Lines are `key = value`, sections are `[name]`,
/// full-line comments start with `#`.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?, &path.display().to_string())
}

pub fn parse_config(content: &str, origin: &str) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };

    struct Entry<'a> {
        line: usize,
        section: Option<&'a str>,
        key: &'a str,
        value: &'a str,
    }
    let mut entries = Vec::new();
    let mut section: Option<&str> = None;
    for (i, raw) in content.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| err(line_no, format!("malformed section header {line:?}")))?
                .trim();
            const SECTIONS: [&str; 8] = [
                "paths", "data", "normalizer", "encoder", "ssgan", "split", "synth", "pretrain",
            ];
            if !SECTIONS.contains(&name) {
                return Err(err(line_no, format!("unknown section [{name}]")));
            }
            section = Some(match name {
                "paths" => "paths",
                "data" => "data",
                "normalizer" => "normalizer",
                "encoder" => "encoder",
                "ssgan" => "ssgan",
                "split" => "split",
                "synth" => "synth",
                _ => "pretrain",
            });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(line_no, format!("expected key = value, got {line:?}")))?;
        entries.push(Entry {
            line: line_no,
            section,
            key: key.trim(),
            value: value.trim(),
        });
    }

    // presets expand before any explicit key overrides
    for e in &entries {
        if e.section.is_none() && e.key == "preset" {
            config
                .apply_preset(e.value)
                .map_err(|e2| err(e.line, e2.to_string()))?;
        }
    }

    let mut positive_class_set = false;

    for e in &entries {
        let line = e.line;
        macro_rules! parse {
            ($ty:ty) => {
                e.value.parse::<$ty>().map_err(|_| {
                    err(line, format!("bad value {:?} for key {:?}", e.value, e.key))
                })?
            };
        }
        let positive = |v: f64| -> Result<f64> {
            if v > 0.0 {
                Ok(v)
            } else {
                Err(err(line, format!("{:?} must be positive, got {v}", e.key)))
            }
        };
        match (e.section, e.key) {
            (None, "preset") => {}
            (Some("paths"), "corpus") => config.corpus = Some(PathBuf::from(e.value)),
            (Some("paths"), "vocab") => config.vocab = Some(PathBuf::from(e.value)),
            (Some("paths"), "out_dir") => config.out_dir = PathBuf::from(e.value),
            (Some("paths"), "init_checkpoint") => {
                config.init_checkpoint = Some(PathBuf::from(e.value))
            }
            (Some("data"), "classes") => {
                config.classes = e.value.split(',').map(|c| c.trim().to_string()).collect();
                config.ssgan.k = config.classes.len();
            }
            (Some("data"), "positive_class") => {
                config.positive_class = e.value.to_string();
                positive_class_set = true;
            }
            (Some("data"), "max_vocab") => config.max_vocab = parse!(usize),
            (Some("data"), "min_freq") => config.min_freq = parse!(usize),
            (Some("normalizer"), "url_token") => config.normalizer.url_token = e.value.to_string(),
            (Some("normalizer"), "emoji_token") => {
                config.normalizer.emoji_token = e.value.to_string()
            }
            (Some("normalizer"), "collapse_whitespace") => {
                config.normalizer.collapse_whitespace = parse!(bool)
            }
            (Some("normalizer"), "normalize_quotes") => {
                config.normalizer.normalize_quotes = parse!(bool)
            }
            (Some("encoder"), "model_dim") => config.encoder.model_dim = parse!(usize),
            (Some("encoder"), "n_layers") => config.encoder.n_layers = parse!(usize),
            (Some("encoder"), "n_heads") => config.encoder.n_heads = parse!(usize),
            (Some("encoder"), "ffn_dim") => config.encoder.ffn_dim = parse!(usize),
            (Some("encoder"), "max_len") => config.encoder.max_len = parse!(usize),
            (Some("encoder"), "dropout") => config.encoder.dropout = parse!(f64),
            (Some("ssgan"), "batch_size") => config.ssgan.batch_size = parse!(usize),
            (Some("ssgan"), "lr_d") => config.ssgan.lr_d = positive(parse!(f64))?,
            (Some("ssgan"), "lr_g") => config.ssgan.lr_g = positive(parse!(f64))?,
            (Some("ssgan"), "epochs") => config.ssgan.epochs = parse!(usize),
            (Some("ssgan"), "noise_dim") => config.ssgan.noise_dim = parse!(usize),
            (Some("ssgan"), "k") => config.ssgan.k = parse!(usize),
            (Some("ssgan"), "seed") => config.ssgan.seed = parse!(u64),
            (Some("ssgan"), "dropout") => config.ssgan.dropout = parse!(f64),
            (Some("ssgan"), "freeze_encoder") => config.ssgan.freeze_encoder = parse!(bool),
            (Some("split"), "n_labeled") => config.split.n_labeled = parse!(usize),
            (Some("split"), "n_unlabeled") => config.split.n_unlabeled = parse!(usize),
            (Some("split"), "n_test") => config.split.n_test = parse!(usize),
            (Some("split"), "seed") => config.split.seed = parse!(u64),
            (Some("split"), "stratified") => config.split.stratified = parse!(bool),
            (Some("synth"), "n_per_class") => config.synth.n_per_class = parse!(usize),
            (Some("synth"), "text_len") => config.synth.text_len = parse!(usize),
            (Some("synth"), "shared_vocab") => config.synth.shared_vocab = parse!(usize),
            (Some("synth"), "n_markers") => config.synth.n_markers = parse!(usize),
            (Some("synth"), "marker_rate") => config.synth.marker_rate = parse!(f64),
            (Some("synth"), "seed") => config.synth.seed = parse!(u64),
            (Some("pretrain"), "epochs") => config.pretrain.epochs = parse!(usize),
            (Some("pretrain"), "batch_size") => config.pretrain.batch_size = parse!(usize),
            (Some("pretrain"), "learning_rate") => {
                config.pretrain.learning_rate = positive(parse!(f64))?
            }
            (Some("pretrain"), "mask_rate") => config.pretrain.mask_rate = parse!(f64),
            (Some("pretrain"), "seed") => config.pretrain_seed = parse!(u64),
            (None, key) => return Err(err(line, format!("key {key:?} outside any section"))),
            (Some(section), key) => {
                return Err(err(line, format!("unknown key {key:?} in section [{section}]")))
            }
        }
    }

    // with a custom class set and no explicit choice, the first class is
    // the positive one
    if !positive_class_set && !config.classes.contains(&config.positive_class) {
        config.positive_class = config.classes[0].clone();
    }

    config.validate().map_err(|e| Error::Parse {
        path: origin.to_string(),
        line: 0,
        msg: e.to_string(),
    })?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let config = parse_config("", "test").unwrap();
        assert_eq!(config.encoder.model_dim, 128);
        assert_eq!(config.ssgan.batch_size, 16);
        assert_eq!(config.ssgan.lr_d, 5e-5);
        assert_eq!(config.ssgan.noise_dim, 100);
        assert_eq!(config.encoder.max_len, 64);
    }

    #[test]
    fn preset_expands_to_grid_row() {
        let config = parse_config("preset = table2-32\n", "test").unwrap();
        assert_eq!(config.split.n_labeled, 32);
        assert_eq!(config.split.n_unlabeled, 512);
        assert_eq!(config.split.n_test, 512);
        assert_eq!(config.ssgan.batch_size, 16);

        let config = parse_config("preset = table2-1024\n", "test").unwrap();
        assert_eq!(
            (config.split.n_labeled, config.split.n_unlabeled, config.split.n_test),
            (1024, 512, 128)
        );
    }

    #[test]
    fn all_six_presets_match_the_grid() {
        for (name, nl, nu, nt) in PRESETS {
            let config = parse_config(&format!("preset = {name}\n"), "test").unwrap();
            assert_eq!(config.split.n_labeled, nl);
            assert_eq!(config.split.n_unlabeled, nu);
            assert_eq!(config.split.n_test, nt);
            assert_eq!(config.ssgan.batch_size, 16);
            assert_eq!(config.ssgan.lr_d, 5e-5);
            assert_eq!(config.ssgan.lr_g, 5e-5);
        }
    }

    #[test]
    fn explicit_keys_override_preset_regardless_of_position() {
        let content = "[split]\nn_unlabeled = 99\npreset = table2-64\n";
        // preset key must be top-level
        assert!(parse_config(content, "test").is_err());

        let content = "preset = table2-64\n[split]\nn_unlabeled = 99\n";
        let config = parse_config(content, "test").unwrap();
        assert_eq!(config.split.n_labeled, 64);
        assert_eq!(config.split.n_unlabeled, 99);
    }

    #[test]
    fn unknown_key_names_line() {
        let err = parse_config("[ssgan]\nbatch_size = 4\nwat = 9\n", "test").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn unknown_section_rejected() {
        let err = parse_config("[nope]\nx = 1\n", "test").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn negative_learning_rate_is_validation_error() {
        let err = parse_config("[ssgan]\nlr_d = -1\n", "test").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("lr_d") && msg.contains(":2"), "{msg}");
    }

    #[test]
    fn bad_preset_name_names_line() {
        let err = parse_config("preset = table2-7\n", "test").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let content = "# a comment\n\n[encoder]\n# another\nmodel_dim = 64\n";
        let config = parse_config(content, "test").unwrap();
        assert_eq!(config.encoder.model_dim, 64);
    }

    #[test]
    fn classes_update_k_and_positive_class() {
        let config = parse_config("[data]\nclasses = a, b, c\n", "test").unwrap();
        assert_eq!(config.classes, vec!["a", "b", "c"]);
        assert_eq!(config.ssgan.k, 3);
        // implicit positive class falls back to the first class
        assert_eq!(config.positive_class, "a");
        // an explicit positive class must be a member
        let err =
            parse_config("[data]\nclasses = a, b\npositive_class = zzz\n", "test").unwrap_err();
        assert!(err.to_string().contains("positive_class"), "{err}");
    }
}
