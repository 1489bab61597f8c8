//! Command-line pipeline: normalize, synth, build-vocab, split, pretrain,
//! train-ssgan, train-supervised, eval, predict, export-embeddings.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error, 3
//! training divergence. Commands read defaults from `--config <file>` (see
//! [`crate::config`]) and individual flags override the file. Output files
//! land under the configured out-dir in `splits/`, `checkpoints/`, `logs/`,
//! and `reports/`.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::{load_config, RunConfig};
use crate::data::{
    benchmark_profiles, build_vocab, encode_reviews, generate_synthetic_corpus, load_corpus,
    make_split, read_embeddings, save_corpus, DataSplit, Vocab,
};
use crate::encoder::{export_split_embeddings, mlm_pretrain, EncoderParams};
use crate::error::{Error, Result};
use crate::eval::{compute_metrics, emit_curves, emit_results_table, RunResult};
use crate::ssgan::{train_ssgan, train_ssgan_embeddings, train_supervised, TrainOutcome};
use crate::tensor::Rng;
use crate::textnorm::normalize_text;

#[derive(Parser)]
#[command(name = "ganlm", version, about = "Semi-supervised GAN text classification pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize line-delimited text (whitespace, URLs, emoji, quotes)
    Normalize(NormalizeArgs),
    /// Generate a synthetic labeled corpus with tunable separability
    Synth(SynthArgs),
    /// Build a frequency vocabulary from a corpus
    BuildVocab(BuildVocabArgs),
    /// Draw a labeled/unlabeled/test split
    Split(SplitArgs),
    /// Pretrain an encoder with masked language modeling
    Pretrain(PretrainArgs),
    /// Train the semi-supervised GAN classifier
    TrainSsgan(TrainArgs),
    /// Train the supervised-only baseline on the same split
    TrainSupervised(TrainArgs),
    /// Evaluate a trained checkpoint on a test set
    Eval(EvalArgs),
    /// Classify raw text lines with a trained checkpoint
    Predict(PredictArgs),
    /// Export a split's sentence embeddings for external tooling
    ExportEmbeddings(ExportArgs),
}

#[derive(Args)]
struct NormalizeArgs {
    /// Input text file, one document per line
    #[arg(long)]
    input: PathBuf,
    /// Output file of normalized lines
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Corpus file to write (JSON Lines)
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n_per_class: Option<usize>,
    #[arg(long)]
    text_len: Option<usize>,
    /// Shared vocabulary size
    #[arg(long)]
    shared_vocab: Option<usize>,
    /// Class-exclusive marker tokens per class
    #[arg(long)]
    n_markers: Option<usize>,
    /// Probability that a token position emits a class marker
    #[arg(long)]
    marker_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BuildVocabArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Vocabulary file to write, one token per line
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    max_vocab: Option<usize>,
    #[arg(long)]
    min_freq: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory; split files go to <out-dir>/splits/
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Experimental-grid preset (table2-32 .. table2-1024)
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    n_labeled: Option<usize>,
    #[arg(long)]
    n_unlabeled: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Disable stratified labeled/test sampling
    #[arg(long)]
    no_stratify: bool,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Checkpoint file to write; defaults to <out-dir>/checkpoints/pretrained.ckpt
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory holding labeled.jsonl, unlabeled.jsonl, test.jsonl
    #[arg(long)]
    splits_dir: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Encoder initialization (a pretrained checkpoint)
    #[arg(long)]
    init_checkpoint: Option<PathBuf>,
    /// Train on exported embeddings instead of text: the stem of
    /// <stem>.labeled.emb / .unlabeled.emb / .test.emb (train-ssgan only)
    #[arg(long)]
    embeddings_stem: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep encoder parameters fixed; train the GAN heads only
    #[arg(long)]
    freeze_encoder: bool,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Test corpus (JSON Lines with labels)
    #[arg(long)]
    test: Option<PathBuf>,
    /// Test embeddings file, for encoder-free checkpoints
    #[arg(long)]
    test_embeddings: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    positive_class: Option<String>,
    /// Model column of the emitted results row
    #[arg(long)]
    model_name: Option<String>,
    /// Labeled-count column of the emitted results row
    #[arg(long)]
    n_labeled: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Raw text, one document per line
    #[arg(long)]
    input: PathBuf,
    /// TSV of predicted label and per-class probabilities
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    /// Checkpoint providing the encoder
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    splits_dir: Option<PathBuf>,
    /// Output stem; writes <stem>.labeled.emb, .unlabeled.emb, .test.emb
    #[arg(long)]
    out_stem: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Parse argv and run; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(Error::Divergence { breakdown }) => {
            eprintln!("error: training diverged: {breakdown:?}");
            3
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Normalize(a) => cmd_normalize(a),
        Command::Synth(a) => cmd_synth(a),
        Command::BuildVocab(a) => cmd_build_vocab(a),
        Command::Split(a) => cmd_split(a),
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::TrainSsgan(a) => cmd_train(a, true),
        Command::TrainSupervised(a) => cmd_train(a, false),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::ExportEmbeddings(a) => cmd_export(a),
    }
}

fn base_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => load_config(p),
        None => Ok(RunConfig::default()),
    }
}

fn ensure_layout(out_dir: &Path) -> Result<()> {
    for sub in ["splits", "checkpoints", "logs", "reports"] {
        std::fs::create_dir_all(out_dir.join(sub))?;
    }
    Ok(())
}

fn cmd_normalize(a: NormalizeArgs) -> Result<i32> {
    let cfg = base_config(&a.config)?;
    let input = std::fs::File::open(&a.input)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(&a.output)?);
    for line in BufReader::new(input).lines() {
        writeln!(out, "{}", normalize_text(&line?, &cfg.normalizer))?;
    }
    Ok(0)
}

fn cmd_synth(a: SynthArgs) -> Result<i32> {
    let mut cfg = base_config(&a.config)?;
    if let Some(v) = a.n_per_class {
        cfg.synth.n_per_class = v;
    }
    if let Some(v) = a.text_len {
        cfg.synth.text_len = v;
    }
    if let Some(v) = a.shared_vocab {
        cfg.synth.shared_vocab = v;
    }
    if let Some(v) = a.n_markers {
        cfg.synth.n_markers = v;
    }
    if let Some(v) = a.marker_rate {
        cfg.synth.marker_rate = v;
    }
    if let Some(v) = a.seed {
        cfg.synth.seed = v;
    }
    let (shared, profiles) = benchmark_profiles(
        &cfg.classes,
        cfg.synth.shared_vocab,
        cfg.synth.n_markers,
        cfg.synth.marker_rate,
    );
    let mut rng = Rng::new(cfg.synth.seed);
    let corpus = generate_synthetic_corpus(
        &mut rng,
        cfg.synth.n_per_class,
        cfg.synth.text_len,
        &shared,
        &profiles,
    )?;
    save_corpus(&a.out, &corpus)?;
    println!(
        "wrote {} reviews ({} per class) to {}",
        corpus.len(),
        cfg.synth.n_per_class,
        a.out.display()
    );
    Ok(0)
}

fn cmd_build_vocab(a: BuildVocabArgs) -> Result<i32> {
    let mut cfg = base_config(&a.config)?;
    if let Some(v) = a.max_vocab {
        cfg.max_vocab = v;
    }
    if let Some(v) = a.min_freq {
        cfg.min_freq = v;
    }
    let corpus = load_corpus(&a.corpus, &cfg.classes, &cfg.normalizer)?;
    let vocab = build_vocab(&corpus, cfg.max_vocab, cfg.min_freq)?;
    vocab.save(&a.out)?;
    println!("wrote {} tokens to {}", vocab.len(), a.out.display());
    Ok(0)
}

fn cmd_split(a: SplitArgs) -> Result<i32> {
    let mut cfg = base_config(&a.config)?;
    if let Some(name) = &a.preset {
        cfg.apply_preset(name)?;
    }
    if let Some(v) = a.n_labeled {
        cfg.split.n_labeled = v;
    }
    if let Some(v) = a.n_unlabeled {
        cfg.split.n_unlabeled = v;
    }
    if let Some(v) = a.n_test {
        cfg.split.n_test = v;
    }
    if let Some(v) = a.seed {
        cfg.split.seed = v;
    }
    if a.no_stratify {
        cfg.split.stratified = false;
    }
    let out_dir = a.out_dir.unwrap_or(cfg.out_dir.clone());
    ensure_layout(&out_dir)?;
    let corpus = load_corpus(&a.corpus, &cfg.classes, &cfg.normalizer)?;
    let split = make_split(&corpus, &cfg.split, &cfg.classes)?;
    let dir = out_dir.join("splits");
    for (name, part) in [
        ("labeled", &split.labeled),
        ("unlabeled", &split.unlabeled),
        ("test", &split.test),
    ] {
        save_corpus(
            &dir.join(format!("{name}.jsonl")),
            &crate::data::Corpus {
                reviews: part.clone(),
            },
        )?;
    }
    println!(
        "wrote split ({} labeled, {} unlabeled, {} test) to {}",
        split.labeled.len(),
        split.unlabeled.len(),
        split.test.len(),
        dir.display()
    );
    Ok(0)
}

fn load_split(dir: &Path, cfg: &RunConfig) -> Result<DataSplit> {
    let load = |name: &str| -> Result<Vec<crate::data::Review>> {
        Ok(load_corpus(
            &dir.join(format!("{name}.jsonl")),
            &cfg.classes,
            &cfg.normalizer,
        )?
        .reviews)
    };
    Ok(DataSplit {
        labeled: load("labeled")?,
        unlabeled: load("unlabeled")?,
        test: load("test")?,
    })
}

/// Check an encoder checkpoint against the vocabulary it will be used with.
fn check_encoder_vocab(encoder: &EncoderParams, vocab: &Vocab) -> Result<()> {
    if encoder.config.vocab_size != vocab.len() {
        return Err(Error::Dimension {
            op: "checkpoint vocab_size vs vocabulary file",
            lhs: vec![encoder.config.vocab_size],
            rhs: vec![vocab.len()],
        });
    }
    Ok(())
}

fn cmd_pretrain(a: PretrainArgs) -> Result<i32> {
    let mut cfg = base_config(&a.config)?;
    if let Some(v) = a.epochs {
        cfg.pretrain.epochs = v;
    }
    if let Some(v) = a.seed {
        cfg.pretrain_seed = v;
    }
    let out_dir = a.out_dir.unwrap_or(cfg.out_dir.clone());
    ensure_layout(&out_dir)?;
    let out = a
        .out
        .unwrap_or_else(|| out_dir.join("checkpoints/pretrained.ckpt"));
    let corpus = load_corpus(&a.corpus, &cfg.classes, &cfg.normalizer)?;
    let vocab = Vocab::load(&a.vocab)?;
    let encoder_config = cfg.encoder.with_vocab(vocab.len());
    let mut rng = Rng::new(cfg.pretrain_seed);
    let outcome = mlm_pretrain(
        &corpus,
        &vocab,
        encoder_config,
        cfg.encoder.dropout,
        &cfg.pretrain,
        &mut rng,
    )?;
    save_checkpoint(&out, &Checkpoint::encoder_only(outcome.encoder))?;

    let mut curve = std::fs::File::create(out_dir.join("logs/pretrain.csv"))?;
    writeln!(curve, "epoch,mlm_loss")?;
    for (i, loss) in outcome.epoch_losses.iter().enumerate() {
        writeln!(curve, "{},{loss:.5}", i + 1)?;
    }
    println!(
        "pretrained {} epochs (loss {} -> {}), checkpoint at {}",
        outcome.epoch_losses.len(),
        outcome
            .epoch_losses
            .first()
            .map_or("-".into(), |l| format!("{l:.4}")),
        outcome
            .epoch_losses
            .last()
            .map_or("-".into(), |l| format!("{l:.4}")),
        out.display()
    );
    Ok(0)
}

fn cmd_train(a: TrainArgs, adversarial: bool) -> Result<i32> {
    let mut cfg = base_config(&a.config)?;
    if let Some(v) = a.epochs {
        cfg.ssgan.epochs = v;
    }
    if let Some(v) = a.seed {
        cfg.ssgan.seed = v;
    }
    if a.freeze_encoder {
        cfg.ssgan.freeze_encoder = true;
    }
    let out_dir = a.out_dir.unwrap_or(cfg.out_dir.clone());
    ensure_layout(&out_dir)?;
    let tag = if adversarial { "ssgan" } else { "supervised" };
    let mut rng = Rng::new(cfg.ssgan.seed);

    let outcome: TrainOutcome = if let Some(stem) = &a.embeddings_stem {
        if !adversarial {
            return Err(Error::Config {
                msg: "train-supervised works on text; embeddings mode is train-ssgan only".into(),
            });
        }
        let stem_str = stem.to_string_lossy();
        let part = |suffix: &str| read_embeddings(Path::new(&format!("{stem_str}.{suffix}.emb")));
        train_ssgan_embeddings(
            &part("labeled")?,
            &part("unlabeled")?,
            &part("test")?,
            &cfg.classes,
            &cfg.ssgan,
            &cfg.positive_class,
            &mut rng,
        )?
    } else {
        let splits_dir = a
            .splits_dir
            .clone()
            .unwrap_or_else(|| out_dir.join("splits"));
        let vocab_path = a.vocab.clone().or(cfg.vocab.clone()).ok_or(Error::Config {
            msg: "no vocabulary given (--vocab or [paths] vocab)".into(),
        })?;
        let vocab = Vocab::load(&vocab_path)?;
        let split = load_split(&splits_dir, &cfg)?;
        let init = a.init_checkpoint.clone().or(cfg.init_checkpoint.clone());
        let encoder = match init {
            Some(ckpt_path) => {
                let ckpt = load_checkpoint(&ckpt_path)?;
                let encoder = ckpt.encoder.ok_or_else(|| Error::Format {
                    path: ckpt_path.display().to_string(),
                    msg: "checkpoint holds no encoder".into(),
                })?;
                check_encoder_vocab(&encoder, &vocab)?;
                encoder
            }
            None => EncoderParams::init(
                cfg.encoder.with_vocab(vocab.len()),
                cfg.encoder.dropout,
                &mut rng,
            )?,
        };
        if adversarial {
            train_ssgan(
                &split,
                &vocab,
                &cfg.classes,
                encoder,
                &cfg.ssgan,
                &cfg.positive_class,
                &mut rng,
            )?
        } else {
            train_supervised(
                &split,
                &vocab,
                &cfg.classes,
                encoder,
                &cfg.ssgan,
                &cfg.positive_class,
                &mut rng,
            )?
        }
    };

    let log_path = out_dir.join(format!("logs/{tag}_trainlog.csv"));
    outcome.log.write_csv(&log_path)?;
    let curve_path = out_dir.join(format!("reports/{tag}_curve.csv"));
    if !outcome.log.records.is_empty() {
        emit_curves(&curve_path, &outcome.log.accuracies())?;
    }
    let ckpt_path = out_dir.join(format!("checkpoints/{tag}.ckpt"));
    save_checkpoint(&ckpt_path, &Checkpoint::from_model(&outcome.model))?;

    if let Some(breakdown) = outcome.diverged {
        eprintln!(
            "training diverged after {} completed epochs; partial log at {}",
            outcome.log.records.len(),
            log_path.display()
        );
        return Err(Error::Divergence { breakdown });
    }
    let last = outcome.log.records.last();
    println!(
        "trained {tag} for {} epochs, final test accuracy {}, checkpoint at {}",
        outcome.log.records.len(),
        last.map_or("-".into(), |r| format!("{:.5}", r.metrics.accuracy)),
        ckpt_path.display()
    );
    Ok(0)
}

fn cmd_eval(a: EvalArgs) -> Result<i32> {
    let mut cfg = base_config(&a.config)?;
    if let Some(v) = &a.positive_class {
        cfg.positive_class = v.clone();
    }
    let out_dir = a.out_dir.unwrap_or(cfg.out_dir.clone());
    ensure_layout(&out_dir)?;
    let model = load_checkpoint(&a.checkpoint)?.into_model()?;
    let classes = if model.classes.is_empty() {
        cfg.classes.clone()
    } else {
        model.classes.clone()
    };
    if !classes.contains(&cfg.positive_class) {
        return Err(Error::Config {
            msg: format!(
                "positive class {:?} not among model classes {:?}",
                cfg.positive_class, classes
            ),
        });
    }

    let report = if let Some(emb_path) = &a.test_embeddings {
        let records = read_embeddings(emb_path)?;
        let vectors: Vec<Vec<f64>> = records.iter().map(|r| r.vector.clone()).collect();
        let gold: Vec<String> = records
            .iter()
            .map(|r| {
                r.label.clone().ok_or_else(|| Error::Format {
                    path: emb_path.display().to_string(),
                    msg: format!("test record {:?} has no label", r.id),
                })
            })
            .collect::<Result<_>>()?;
        let (predictions, _) = model.predict_vectors(&vectors)?;
        compute_metrics(&predictions, &gold, &cfg.positive_class)?
    } else {
        let test_path = a.test.ok_or(Error::Config {
            msg: "need --test (text) or --test-embeddings".into(),
        })?;
        let vocab_path = a.vocab.or(cfg.vocab.clone()).ok_or(Error::Config {
            msg: "need --vocab to evaluate on text".into(),
        })?;
        let vocab = Vocab::load(&vocab_path)?;
        let encoder = model.encoder.as_ref().ok_or(Error::Config {
            msg: "checkpoint has no encoder; use --test-embeddings".into(),
        })?;
        check_encoder_vocab(encoder, &vocab)?;
        let test = load_corpus(&test_path, &classes, &cfg.normalizer)?;
        let gold: Vec<String> = test
            .reviews
            .iter()
            .map(|r| {
                r.label.clone().ok_or_else(|| Error::Parse {
                    path: test_path.display().to_string(),
                    line: 0,
                    msg: format!("test record {:?} has no label", r.id),
                })
            })
            .collect::<Result<_>>()?;
        let batch = encode_reviews(&test.reviews, &vocab, encoder.config.max_len, &classes)?;
        let (predictions, _) = model.predict_batch(&batch)?;
        compute_metrics(&predictions, &gold, &cfg.positive_class)?
    };

    let model_name = a.model_name.unwrap_or_else(|| {
        if model.discriminator.has_fake_class {
            "ssgan".to_string()
        } else {
            "supervised".to_string()
        }
    });
    let row = RunResult {
        model: model_name,
        n_labeled: a.n_labeled.unwrap_or(0),
        report: report.clone(),
    };
    let report_path = out_dir.join("reports/eval.csv");
    emit_results_table(&report_path, &[row])?;
    println!(
        "accuracy {:.5} precision {} recall {} f1 {} (positive class {:?}, n={})",
        report.accuracy,
        crate::eval::format_metric(report.precision),
        crate::eval::format_metric(report.recall),
        crate::eval::format_metric(report.f1),
        report.positive_class,
        report.n_test,
    );
    println!("report at {}", report_path.display());
    Ok(0)
}

fn cmd_predict(a: PredictArgs) -> Result<i32> {
    let cfg = base_config(&a.config)?;
    let model = load_checkpoint(&a.checkpoint)?.into_model()?;
    let encoder = model.encoder.as_ref().ok_or(Error::Config {
        msg: "checkpoint has no encoder; predict needs text-mode models".into(),
    })?;
    let vocab = Vocab::load(&a.vocab)?;
    check_encoder_vocab(encoder, &vocab)?;

    let input = std::fs::File::open(&a.input)?;
    let texts: Vec<String> = BufReader::new(input)
        .lines()
        .collect::<std::io::Result<_>>()?;
    let reviews: Vec<crate::data::Review> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| crate::data::Review {
            id: format!("line-{}", i + 1),
            text: normalize_text(t, &cfg.normalizer),
            label: None,
        })
        .collect();
    let batch = encode_reviews(&reviews, &vocab, encoder.config.max_len, &[])?;
    let (labels, probs) = model.predict_batch(&batch)?;

    let mut out = std::io::BufWriter::new(std::fs::File::create(&a.output)?);
    let header: Vec<String> = model.classes.iter().map(|c| format!("p_{c}")).collect();
    writeln!(out, "label\t{}", header.join("\t"))?;
    for (label, p) in labels.iter().zip(probs.iter()) {
        let cells: Vec<String> = p.iter().map(|v| format!("{v:.5}")).collect();
        writeln!(out, "{label}\t{}", cells.join("\t"))?;
    }
    println!("wrote {} predictions to {}", labels.len(), a.output.display());
    Ok(0)
}

fn cmd_export(a: ExportArgs) -> Result<i32> {
    let cfg = base_config(&a.config)?;
    let model = load_checkpoint(&a.checkpoint)?;
    let encoder = model.encoder.ok_or(Error::Config {
        msg: "checkpoint has no encoder to export embeddings with".into(),
    })?;
    let vocab = Vocab::load(&a.vocab)?;
    check_encoder_vocab(&encoder, &vocab)?;
    let out_dir = cfg.out_dir.clone();
    let splits_dir = a.splits_dir.unwrap_or_else(|| out_dir.join("splits"));
    let split = load_split(&splits_dir, &cfg)?;
    let stem = a.out_stem.unwrap_or_else(|| out_dir.join("embeddings"));
    if let Some(parent) = stem.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let written = export_split_embeddings(&split, &vocab, &encoder, &stem)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(0)
}
