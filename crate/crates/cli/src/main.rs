//! `distsum` — train, run, and score the distraction-aware summarizer.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 numerical failure.

mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use distsum_core::checkpoint::load_model;
use distsum_core::config::TrainingConfig;
use distsum_core::corpus::{encode, read_corpus, read_summaries, write_summaries, DocumentPair};
use distsum_core::error::Error;
use distsum_core::kv;
use distsum_core::model::Model;
use distsum_core::rouge::{corpus_rouge, report};
use distsum_core::search::{BeamConfig, DistractionWeights};
use distsum_core::summarize::summarize_pair;
use distsum_core::trainer::train;
use distsum_core::vocab::Vocabulary;

#[derive(Parser)]
#[command(name = "distsum", version, about = "Distraction-aware neural summarizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a frequency-truncated vocabulary from a JSONL corpus.
    BuildVocab(BuildVocabArgs),
    /// Train a model and keep the best-validation checkpoint.
    Train(Box<TrainArgs>),
    /// Decode summaries for a corpus with beam search.
    Summarize(SummarizeArgs),
    /// ROUGE-score a system output file against references.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct BuildVocabArgs {
    /// Corpus JSONL file.
    #[arg(long)]
    corpus: PathBuf,
    /// Vocabulary size including the 4 reserved tokens.
    #[arg(long, default_value_t = 25000)]
    size: usize,
    /// Split tokens into characters before counting.
    #[arg(long, default_value_t = false)]
    char_mode: bool,
    /// Output vocabulary file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Training corpus JSONL file.
    #[arg(long)]
    corpus: PathBuf,
    /// Validation corpus; defaults to the training corpus.
    #[arg(long)]
    valid: Option<PathBuf>,
    /// Vocabulary file from `build-vocab`.
    #[arg(long)]
    vocab: PathBuf,
    /// Output directory for checkpoint, log, and manifest.
    #[arg(long)]
    out: PathBuf,
    /// key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named hyperparameter profile: cnn or lcsts.
    #[arg(long)]
    preset: Option<String>,

    // Per-key overrides, applied after the preset and the config file.
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    attention_dim: Option<usize>,
    #[arg(long)]
    bidirectional: Option<bool>,
    #[arg(long)]
    two_level: Option<bool>,
    #[arg(long)]
    distract_content: Option<bool>,
    #[arg(long)]
    distract_attention: Option<bool>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    adadelta_rho: Option<f64>,
    #[arg(long)]
    adadelta_epsilon: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    validate_every: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_doc_tokens: Option<usize>,
    #[arg(long)]
    char_mode: Option<bool>,
    #[arg(long)]
    clip_norm: Option<f64>,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Trained checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Vocabulary the checkpoint was trained with.
    #[arg(long)]
    vocab: PathBuf,
    /// Input documents, corpus JSONL format (summaries optional).
    #[arg(long)]
    input: PathBuf,
    /// Output summaries JSONL file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    beam_size: usize,
    #[arg(long, default_value_t = 100)]
    max_len: usize,
    /// Weight on attention novelty (min KL against past attention).
    #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
    lambda1: f64,
    /// Weight on content redundancy (max cosine against past content).
    #[arg(long, default_value_t = -0.1, allow_hyphen_values = true)]
    lambda2: f64,
    /// Weight on state redundancy (max cosine against past states).
    #[arg(long, default_value_t = -0.1, allow_hyphen_values = true)]
    lambda3: f64,
    /// Compare hypotheses by length-normalized score.
    #[arg(long, default_value_t = false)]
    length_normalize: bool,
    /// Decode this many documents in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    /// System output JSONL file (summary field per line).
    #[arg(long)]
    system: PathBuf,
    /// Reference JSONL file (summary field per line).
    #[arg(long)]
    reference: PathBuf,
    /// Score over characters instead of tokens.
    #[arg(long, default_value_t = false)]
    char_mode: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::BuildVocab(args) => cmd_build_vocab(args),
        Command::Train(args) => cmd_train(*args),
        Command::Summarize(args) => cmd_summarize(args),
        Command::Evaluate(args) => cmd_evaluate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Numeric(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn cmd_build_vocab(args: BuildVocabArgs) -> distsum_core::Result<()> {
    let started = manifest::Stopwatch::start();
    let pairs = read_corpus(&args.corpus, args.char_mode)?;
    let vocab = Vocabulary::build(&pairs, args.size)?;
    vocab.save(&args.out)?;
    println!("vocab_size={}", vocab.len());
    manifest::write(
        &args.out.with_extension("manifest"),
        "build-vocab",
        &[
            ("corpus", args.corpus.display().to_string()),
            ("size", args.size.to_string()),
            ("char_mode", args.char_mode.to_string()),
            ("out", args.out.display().to_string()),
            ("vocab_hash", vocab.fingerprint()),
        ],
        started,
    )
}

fn resolve_config(args: &TrainArgs) -> distsum_core::Result<TrainingConfig> {
    let mut cfg = match &args.preset {
        Some(name) => TrainingConfig::preset(name)?,
        None => TrainingConfig::default(),
    };
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::usage(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply_kv_text(&text)?;
    }
    let mut set = |key: &str, value: Option<String>| -> distsum_core::Result<()> {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
        Ok(())
    };
    set("vocab_size", args.vocab_size.map(|v| v.to_string()))?;
    set("embed_dim", args.embed_dim.map(|v| v.to_string()))?;
    set("hidden_dim", args.hidden_dim.map(|v| v.to_string()))?;
    set("attention_dim", args.attention_dim.map(|v| v.to_string()))?;
    set("bidirectional", args.bidirectional.map(|v| v.to_string()))?;
    set("two_level", args.two_level.map(|v| v.to_string()))?;
    set("distract_content", args.distract_content.map(|v| v.to_string()))?;
    set("distract_attention", args.distract_attention.map(|v| v.to_string()))?;
    set("batch_size", args.batch_size.map(|v| v.to_string()))?;
    set("adadelta_rho", args.adadelta_rho.map(|v| v.to_string()))?;
    set("adadelta_epsilon", args.adadelta_epsilon.map(|v| v.to_string()))?;
    set("max_epochs", args.max_epochs.map(|v| v.to_string()))?;
    set("validate_every", args.validate_every.map(|v| v.to_string()))?;
    set("seed", args.seed.map(|v| v.to_string()))?;
    set("max_doc_tokens", args.max_doc_tokens.map(|v| v.to_string()))?;
    set("char_mode", args.char_mode.map(|v| v.to_string()))?;
    set("clip_norm", args.clip_norm.map(|v| v.to_string()))?;
    Ok(cfg)
}

fn length_capped(pairs: Vec<DocumentPair>, cap: usize) -> Vec<DocumentPair> {
    if cap == 0 {
        return pairs;
    }
    pairs
        .into_iter()
        .filter(|p| p.document_len() <= cap)
        .collect()
}

fn cmd_train(args: TrainArgs) -> distsum_core::Result<()> {
    let started = manifest::Stopwatch::start();
    let mut cfg = resolve_config(&args)?;
    let vocab = Vocabulary::load(&args.vocab)?;
    if cfg.model.vocab_size == 0 {
        cfg.model.vocab_size = vocab.len();
    } else if cfg.model.vocab_size != vocab.len() {
        return Err(Error::usage(format!(
            "configured vocab_size {} does not match vocabulary file ({} tokens)",
            cfg.model.vocab_size,
            vocab.len()
        )));
    }
    cfg.validate()?;

    let train_pairs = length_capped(read_corpus(&args.corpus, cfg.char_mode)?, cfg.max_doc_tokens);
    if train_pairs.iter().any(|p| p.summary.is_empty()) {
        return Err(Error::usage("training pairs must carry a non-empty summary"));
    }
    let valid_pairs = match &args.valid {
        Some(path) => length_capped(read_corpus(path, cfg.char_mode)?, cfg.max_doc_tokens),
        None => train_pairs.clone(),
    };
    let encode_all =
        |pairs: &[DocumentPair]| -> Vec<_> { pairs.iter().map(|p| encode(p, &vocab)).collect() };
    let train_set = encode_all(&train_pairs);
    let valid_set = encode_all(&valid_pairs);

    let mut model = Model::new(cfg.model.clone(), cfg.seed);
    let report = train(&mut model, &train_set, &valid_set, &cfg, &vocab.fingerprint(), &args.out)?;
    println!(
        "updates={} best_val_loss={:.6} checkpoint={}",
        report.updates,
        report.best_val_loss,
        args.out.join("model.ckpt").display()
    );

    let mut fields: Vec<(&str, String)> = vec![
        ("corpus", args.corpus.display().to_string()),
        ("vocab", args.vocab.display().to_string()),
        ("out", args.out.display().to_string()),
        ("updates", report.updates.to_string()),
        ("best_val_loss", format!("{:.6}", report.best_val_loss)),
    ];
    for (k, v) in cfg.to_kv() {
        fields.push(("config", format!("{k}={v}")));
    }
    manifest::write_owned(&args.out.join("manifest.txt"), "train", fields, started)
}

fn cmd_summarize(args: SummarizeArgs) -> distsum_core::Result<()> {
    let started = manifest::Stopwatch::start();
    let (model, ckpt) = load_model(&args.checkpoint)?;
    let vocab = Vocabulary::load(&args.vocab)?;
    if let Some(expected) = ckpt.meta("vocab_hash") {
        if expected != vocab.fingerprint() {
            return Err(Error::usage(
                "vocabulary file does not match the one the checkpoint was trained with",
            ));
        }
    }
    if model.config().vocab_size != vocab.len() {
        return Err(Error::usage(format!(
            "checkpoint vocab_size {} does not match vocabulary file ({} tokens)",
            model.config().vocab_size,
            vocab.len()
        )));
    }
    let char_mode = match ckpt.meta("char_mode") {
        Some(v) => kv::parse_bool(v, "char_mode")?,
        None => false,
    };
    let pairs = read_corpus(&args.input, char_mode)?;
    let beam = BeamConfig {
        beam_size: args.beam_size,
        max_len: args.max_len,
        weights: DistractionWeights {
            attention: args.lambda1,
            content: args.lambda2,
            state: args.lambda3,
        },
        length_normalize: args.length_normalize,
    };

    let summaries: Vec<Vec<String>> = if args.jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs)
            .build()
            .map_err(|e| Error::usage(format!("cannot build thread pool: {e}")))?;
        let results: Vec<distsum_core::Result<Vec<String>>> = pool.install(|| {
            pairs
                .par_iter()
                .map(|pair| summarize_pair(&model, &vocab, pair, &beam).map(|s| s.tokens))
                .collect()
        });
        results.into_iter().collect::<distsum_core::Result<_>>()?
    } else {
        let mut out = Vec::with_capacity(pairs.len());
        for pair in &pairs {
            out.push(summarize_pair(&model, &vocab, pair, &beam)?.tokens);
        }
        out
    };
    write_summaries(&args.out, &summaries)?;
    println!("documents={} out={}", summaries.len(), args.out.display());
    manifest::write(
        &args.out.with_extension("manifest"),
        "summarize",
        &[
            ("checkpoint", args.checkpoint.display().to_string()),
            ("vocab", args.vocab.display().to_string()),
            ("input", args.input.display().to_string()),
            ("out", args.out.display().to_string()),
            ("beam_size", args.beam_size.to_string()),
            ("max_len", args.max_len.to_string()),
            ("lambda1", args.lambda1.to_string()),
            ("lambda2", args.lambda2.to_string()),
            ("lambda3", args.lambda3.to_string()),
            ("jobs", args.jobs.to_string()),
        ],
        started,
    )
}

fn cmd_evaluate(args: EvaluateArgs) -> distsum_core::Result<()> {
    let system = read_summaries(&args.system, args.char_mode)?;
    let reference = read_summaries(&args.reference, args.char_mode)?;
    if system.len() != reference.len() {
        return Err(Error::usage(format!(
            "system file has {} lines but reference file has {}",
            system.len(),
            reference.len()
        )));
    }
    let pairs: Vec<(Vec<String>, Vec<String>)> =
        system.into_iter().zip(reference).collect();
    let score = corpus_rouge(&pairs)?;
    print!("{}", report(&score));
    Ok(())
}

// Referenced from manifest.rs for the code_version field.
pub(crate) const VERSION: &str = env!("CARGO_PKG_VERSION");
