//! `adappeal`: command-line front end for the advertising-appeal pipeline.
//!
//! Subcommands cover the full workflow: corpus preparation, annotation
//! adjudication and agreement statistics, aspect-model training and
//! evaluation, CTR regression, correlation reporting, expression mining,
//! and a synthetic-corpus generator for demos and tests.
//!
//! Exit codes: 0 on success, 1 on a usage error, 2 on a data error.
//! All randomness sits behind `--seed`; a fixed seed yields bit-identical
//! artifacts. `ADAPPEAL_THREADS` caps internal parallelism.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use adappeal_core::analytics::{correlate, extract_expressions, CorrelationReport};
use adappeal_core::annotation::{
    adjudicate, agreement_counts, cohen_kappa, pairwise_span_f1, read_annotations, read_gold,
    token_kappa, write_gold, AgreementCounts, AnnotatorRecord, GoldDocument, SpanAnnotation,
};
use adappeal_core::aspects::{AspectConfig, SpanPrediction};
use adappeal_core::corpus::{load_ads, write_ads, write_rejects, AdCorpus};
use adappeal_core::ctr::{
    evaluate_ctr, prepare_examples, train_ctr, AspectProvider, AucMode, CtrConfig, CtrModel,
};
use adappeal_core::encoder::{tokenize, Encoded, EncoderConfig, TokenMode};
use adappeal_core::eval::{
    close_label_set, evaluate_doc_predictions, evaluate_span_predictions, DocEvalReport, EvalMode,
    SpanEvalReport,
};
use adappeal_core::model_io::{
    load_ctr_model, load_doc_model, load_model, load_span_model, read_doc_predictions,
    read_embeddings, read_span_predictions, save_model, write_doc_predictions,
    write_span_predictions, AnyModel, DocPredictionRecord, SpanPredictionRecord,
};
use adappeal_core::synth::{generate, SynthConfig};
use adappeal_core::taxonomy::{canonical_industry, LabelKind, LabelVector, Taxonomy};
use adappeal_core::text::char_len;
use adappeal_core::train::{train_doc_model, train_span_model, TrainConfig, TrainLog};
use adappeal_core::aspects;

#[derive(Parser)]
#[command(
    name = "adappeal",
    version,
    about = "Advertising-appeal pipeline: corpus prep, aspect detection, CTR analysis",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect the built-in 21-label aspect taxonomy.
    Taxonomy {
        #[command(subcommand)]
        action: TaxonomyAction,
    },
    /// Prepare a raw ads file: validate, cap per advertiser, length-filter,
    /// near-duplicate dedup, and optionally split by campaign.
    Prep(PrepArgs),
    /// Merge three annotators' spans per document into gold annotations.
    Adjudicate(AdjudicateArgs),
    /// Inter-annotator agreement: token-level kappa and pairwise span F1.
    Agreement(AgreementArgs),
    /// Train the span-based aspect tagger (boundary CRF + span classifier).
    TrainSpan(TrainSpanArgs),
    /// Train the document-level multi-label aspect classifier.
    TrainDoc(TrainDocArgs),
    /// Run a trained aspect model over ads and write predictions.
    Predict(PredictArgs),
    /// Score predictions (or a model) against gold annotations.
    Eval(EvalArgs),
    /// Train the CTR regressor, optionally fused with aspect features.
    TrainCtr(TrainCtrArgs),
    /// Evaluate a trained CTR model: AUC, RMSE, and MAE.
    EvalCtr(EvalCtrArgs),
    /// Cross industries with predicted aspects and actual CTRs.
    Correlate(CorrelateArgs),
    /// List the most frequent annotated expressions for one label.
    Expressions(ExpressionsArgs),
    /// Generate a synthetic ads + gold corpus with known structure.
    Synth(SynthArgs),
}

#[derive(Subcommand)]
enum TaxonomyAction {
    /// Print all 21 labels, one per line.
    Dump,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// One token per character.
    Char,
    /// Word-boundary tokens.
    Word,
}

impl From<ModeArg> for TokenMode {
    fn from(mode: ModeArg) -> TokenMode {
        match mode {
            ModeArg::Char => TokenMode::Char,
            ModeArg::Word => TokenMode::Word,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    /// Corpus tuned for aspect-detection training.
    Detection,
    /// Corpus tuned for CTR-lift experiments.
    Ctr,
}

#[derive(Clone, Copy, ValueEnum)]
enum AucModeArg {
    /// Clicks count as positives, remaining impressions as negatives.
    Expansion,
    /// One unit per ad, positive when CTR exceeds the median.
    MedianBinarize,
}

impl From<AucModeArg> for AucMode {
    fn from(mode: AucModeArg) -> AucMode {
        match mode {
            AucModeArg::Expansion => AucMode::Expansion,
            AucModeArg::MedianBinarize => AucMode::MedianBinarize,
        }
    }
}

/// Encoder shape flags shared by the training commands.
#[derive(Args)]
struct EncoderArgs {
    /// Tokenization granularity.
    #[arg(long, value_enum, default_value_t = ModeArg::Char)]
    mode: ModeArg,
    /// Width of token and context vectors.
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Hashed embedding vocabulary size.
    #[arg(long, default_value_t = 1 << 15)]
    buckets: usize,
}

impl EncoderArgs {
    fn config(&self) -> EncoderConfig {
        let mut config = EncoderConfig::new(self.mode.into(), self.dim);
        config.buckets = self.buckets;
        config
    }
}

/// Optimizer flags shared by the training commands.
#[derive(Args)]
struct OptimArgs {
    /// Learning rate (default depends on the command).
    #[arg(long)]
    lr: Option<f64>,
    /// Maximum training epochs.
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 10)]
    batch_size: usize,
    /// Non-improving dev epochs tolerated before early stopping.
    #[arg(long, default_value_t = 3)]
    patience: usize,
    /// Seed for parameter init and shuffling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl OptimArgs {
    fn apply(&self, mut config: TrainConfig) -> TrainConfig {
        if let Some(lr) = self.lr {
            config.lr = lr;
        }
        config.max_epochs = self.epochs;
        config.batch_size = self.batch_size;
        config.patience = self.patience;
        config.seed = self.seed;
        config
    }
}

#[derive(Args)]
struct PrepArgs {
    /// Raw ads.jsonl to prepare.
    #[arg(long = "in")]
    input: PathBuf,
    /// Directory for corpus.jsonl, rejects.jsonl, and optional splits.
    #[arg(long)]
    out_dir: PathBuf,
    /// Minimum title+description length in characters (inclusive).
    #[arg(long, default_value_t = 15)]
    min_chars: usize,
    /// Maximum title+description length in characters (inclusive).
    #[arg(long, default_value_t = 200)]
    max_chars: usize,
    /// Per-advertiser record cap (random sample beyond it).
    #[arg(long, default_value_t = 5000)]
    advertiser_cap: usize,
    /// Normalized edit-distance at or below which a record is a duplicate.
    #[arg(long, default_value_t = 0.3)]
    dedup_threshold: f64,
    /// Train/dev/test fractions, e.g. 0.8,0.1,0.1; omit to skip splitting.
    #[arg(long, value_parser = parse_ratios)]
    split: Option<Ratios>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug)]
struct Ratios(f64, f64, f64);

fn parse_ratios(arg: &str) -> std::result::Result<Ratios, String> {
    let parts: Vec<&str> = arg.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated fractions, got {arg:?}"));
    }
    let mut vals = [0.0f64; 3];
    for (slot, part) in vals.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("bad fraction {part:?}: {e}"))?;
        if !slot.is_finite() || *slot < 0.0 {
            return Err(format!("fractions must be non-negative, got {part:?}"));
        }
    }
    if vals.iter().sum::<f64>() <= 0.0 {
        return Err("fractions must have a positive sum".to_string());
    }
    Ok(Ratios(vals[0], vals[1], vals[2]))
}

#[derive(Args)]
struct AdjudicateArgs {
    /// annotations.jsonl with one line per (annotator, document).
    #[arg(long = "in")]
    input: PathBuf,
    /// ads.jsonl supplying each document's text and industry.
    #[arg(long)]
    texts: PathBuf,
    /// Output gold.jsonl.
    #[arg(long = "out")]
    output: PathBuf,
}

#[derive(Args)]
struct AgreementArgs {
    /// annotations.jsonl with one line per (annotator, document).
    #[arg(long = "in")]
    input: PathBuf,
    /// ads.jsonl supplying text lengths; without it the largest annotated
    /// offset per document is used instead.
    #[arg(long)]
    texts: Option<PathBuf>,
    /// Also print pooled kappa per label.
    #[arg(long)]
    per_label: bool,
}

#[derive(Args)]
struct TrainSpanArgs {
    /// Training gold.jsonl.
    #[arg(long)]
    train: PathBuf,
    /// Development gold.jsonl for early stopping.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Output model file.
    #[arg(long = "out")]
    output: PathBuf,
    #[command(flatten)]
    encoder: EncoderArgs,
    #[command(flatten)]
    optim: OptimArgs,
    /// Probability cutoff for emitting a label.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Weight of the boundary-sequence loss term.
    #[arg(long, default_value_t = 1.0)]
    crf_weight: f64,
    /// Weight of the span-classification loss term.
    #[arg(long, default_value_t = 1.0)]
    bce_weight: f64,
}

#[derive(Args)]
struct TrainDocArgs {
    /// Training gold.jsonl.
    #[arg(long)]
    train: PathBuf,
    /// Development gold.jsonl for early stopping.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Output model file.
    #[arg(long = "out")]
    output: PathBuf,
    #[command(flatten)]
    encoder: EncoderArgs,
    #[command(flatten)]
    optim: OptimArgs,
    /// Probability cutoff for emitting a label.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Args)]
struct PredictArgs {
    /// Trained span or doc model file.
    #[arg(long)]
    model: PathBuf,
    /// ads.jsonl to predict over.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output predictions.jsonl.
    #[arg(long = "out")]
    output: PathBuf,
    /// embeddings.jsonl overriding the encoder for listed documents.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Gold annotations to score against.
    #[arg(long)]
    gold: PathBuf,
    /// predictions.jsonl to score (span or doc records, auto-detected).
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    predictions: Option<PathBuf>,
    /// Model file to run and score directly.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Score label assignment on gold boundaries (span models only).
    #[arg(long, requires = "model")]
    oracle_spans: bool,
    /// Add each fine label's coarse group to gold and predicted label sets
    /// before scoring.
    #[arg(long)]
    hierarchy_closure: bool,
    /// Write the full report as JSON here.
    #[arg(long = "out")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TrainCtrArgs {
    /// Training ads.jsonl (impressions > 0).
    #[arg(long)]
    train: PathBuf,
    /// Development ads.jsonl for early stopping.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Output model file.
    #[arg(long = "out")]
    output: PathBuf,
    /// Aspect feature source: none, span:<model.json>, or doc:<model.json>.
    #[arg(long, value_parser = parse_aspects, default_value = "none")]
    aspects: AspectsArg,
    #[command(flatten)]
    encoder: EncoderArgs,
    #[command(flatten)]
    optim: OptimArgs,
    /// Width of the text head.
    #[arg(long, default_value_t = 64)]
    ad_dim: usize,
    /// Width of the aspect head.
    #[arg(long, default_value_t = 32)]
    aspect_dim: usize,
    /// Weight each example's squared error by its impressions.
    #[arg(long)]
    weight_by_impressions: bool,
}

#[derive(Clone, Debug)]
enum AspectsArg {
    None,
    Span(PathBuf),
    Doc(PathBuf),
}

fn parse_aspects(arg: &str) -> std::result::Result<AspectsArg, String> {
    if arg == "none" {
        return Ok(AspectsArg::None);
    }
    if let Some(path) = arg.strip_prefix("span:") {
        return Ok(AspectsArg::Span(PathBuf::from(path)));
    }
    if let Some(path) = arg.strip_prefix("doc:") {
        return Ok(AspectsArg::Doc(PathBuf::from(path)));
    }
    Err(format!(
        "expected none, span:<model.json>, or doc:<model.json>, got {arg:?}"
    ))
}

#[derive(Args)]
struct EvalCtrArgs {
    /// Trained CTR model file.
    #[arg(long)]
    model: PathBuf,
    /// ads.jsonl to evaluate on.
    #[arg(long)]
    test: PathBuf,
    /// How examples become positives/negatives for AUC.
    #[arg(long, value_enum, default_value_t = AucModeArg::Expansion)]
    auc_mode: AucModeArg,
}

#[derive(Args)]
struct CorrelateArgs {
    /// ads.jsonl with observed impressions and clicks.
    #[arg(long)]
    ads: PathBuf,
    /// predictions.jsonl (span or doc records, auto-detected).
    #[arg(long)]
    predictions: PathBuf,
    /// Output CSV path; a full-precision JSON twin is written alongside.
    #[arg(long = "out")]
    output: PathBuf,
    /// Minimum ads an industry needs to be reported.
    #[arg(long, default_value_t = 100)]
    min_cases: usize,
    /// Restrict the report to these industries (comma-separated).
    #[arg(long, value_delimiter = ',')]
    industries: Option<Vec<String>>,
    /// Print cells with |r| > 0.25, strongest first.
    #[arg(long)]
    effective: bool,
}

#[derive(Args)]
struct ExpressionsArgs {
    /// Gold annotations to mine.
    #[arg(long)]
    gold: PathBuf,
    /// Label index or name, e.g. 3 or "Point reward".
    #[arg(long)]
    label: String,
    /// Restrict to one industry.
    #[arg(long)]
    industry: Option<String>,
    /// Number of expression groups to print.
    #[arg(long, default_value_t = 10)]
    top_k: usize,
}

#[derive(Args)]
struct SynthArgs {
    /// Directory for ads.jsonl and gold.jsonl.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = PresetArg::Detection)]
    preset: PresetArg,
    /// Override the preset's document count.
    #[arg(long)]
    n_docs: Option<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn main() -> ExitCode {
    // Die quietly when a downstream pager or `head` closes the pipe.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0u8,
                _ => 1u8,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

/// Worker threads available to parallel sections: `ADAPPEAL_THREADS` when
/// set, otherwise what the machine reports.
fn threads() -> usize {
    match std::env::var("ADAPPEAL_THREADS") {
        Ok(raw) => match raw.parse::<usize>() {
            Ok(n) if n >= 1 => n,
            _ => {
                log::warn!("ignoring invalid ADAPPEAL_THREADS value {raw:?}");
                1
            }
        },
        Err(_) => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Taxonomy { action } => match action {
            TaxonomyAction::Dump => cmd_taxonomy_dump(),
        },
        Command::Prep(args) => cmd_prep(args),
        Command::Adjudicate(args) => cmd_adjudicate(args),
        Command::Agreement(args) => cmd_agreement(args),
        Command::TrainSpan(args) => cmd_train_span(args),
        Command::TrainDoc(args) => cmd_train_doc(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Eval(args) => cmd_eval(args),
        Command::TrainCtr(args) => cmd_train_ctr(args),
        Command::EvalCtr(args) => cmd_eval_ctr(args),
        Command::Correlate(args) => cmd_correlate(args),
        Command::Expressions(args) => cmd_expressions(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

fn cmd_taxonomy_dump() -> Result<()> {
    let taxonomy = Taxonomy::builtin();
    for label in taxonomy.labels() {
        let kind = match label.kind {
            LabelKind::Coarse => "coarse",
            LabelKind::Fine => "fine",
        };
        let parent = match label.parent {
            Some(p) => taxonomy.get(p).name.clone(),
            None => "-".to_string(),
        };
        println!(
            "({})\t{}\t{}\t{}\t{}",
            label.index, label.name, kind, parent, label.example
        );
    }
    Ok(())
}

fn cmd_prep(args: PrepArgs) -> Result<()> {
    if args.min_chars > args.max_chars {
        bail!(
            "--min-chars {} exceeds --max-chars {}",
            args.min_chars,
            args.max_chars
        );
    }
    if !(0.0..=1.0).contains(&args.dedup_threshold) {
        bail!(
            "--dedup-threshold must lie in [0, 1], got {}",
            args.dedup_threshold
        );
    }
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    let report = load_ads(&args.input)?;
    let loaded = report.corpus.len();
    println!("loaded {} record(s), rejected {}", loaded, report.rejects.len());
    let rejects_path = args.out_dir.join("rejects.jsonl");
    write_rejects(&rejects_path, &report.rejects)?;

    let corpus = report
        .corpus
        .sample_per_advertiser(args.advertiser_cap, args.seed);
    println!("advertiser cap {}: kept {}", args.advertiser_cap, corpus.len());
    let corpus = corpus.filter_length(args.min_chars, args.max_chars);
    println!(
        "length filter [{}, {}]: kept {}",
        args.min_chars,
        args.max_chars,
        corpus.len()
    );
    let corpus = corpus.dedup_with_threads(args.dedup_threshold, threads());
    println!("dedup <= {}: kept {}", args.dedup_threshold, corpus.len());

    let corpus_path = args.out_dir.join("corpus.jsonl");
    write_ads(&corpus_path, &corpus)?;
    println!(
        "wrote {} and {}",
        corpus_path.display(),
        rejects_path.display()
    );

    if let Some(Ratios(a, b, c)) = args.split {
        let (train, dev, test) = corpus.split_by_campaign((a, b, c), args.seed)?;
        for (name, part) in [("train", &train), ("dev", &dev), ("test", &test)] {
            let path = args.out_dir.join(format!("{name}.jsonl"));
            write_ads(&path, part)?;
            println!("wrote {} ({} record(s))", path.display(), part.len());
        }
    }
    Ok(())
}

/// Maps ad id to (annotation text, industry).
fn text_table(corpus: &AdCorpus) -> BTreeMap<&str, (String, &str)> {
    corpus
        .records
        .iter()
        .map(|ad| (ad.id.as_str(), (ad.text(), ad.industry.as_str())))
        .collect()
}

/// Groups annotator records per document, preserving input order of first
/// appearance within each group.
fn group_by_doc(records: Vec<AnnotatorRecord>) -> BTreeMap<String, Vec<AnnotatorRecord>> {
    let mut groups: BTreeMap<String, Vec<AnnotatorRecord>> = BTreeMap::new();
    for record in records {
        groups.entry(record.doc_id.clone()).or_default().push(record);
    }
    groups
}

fn cmd_adjudicate(args: AdjudicateArgs) -> Result<()> {
    let annotations = read_annotations(&args.input)?;
    let ads = load_ads(&args.texts)?;
    if !ads.rejects.is_empty() {
        log::warn!("{} malformed line(s) in {}", ads.rejects.len(), args.texts.display());
    }
    let texts = text_table(&ads.corpus);

    let mut golds = Vec::new();
    let mut span_total = 0usize;
    for (doc_id, records) in group_by_doc(annotations) {
        let (text, industry) = texts
            .get(doc_id.as_str())
            .ok_or_else(|| anyhow::anyhow!("doc_id {doc_id:?} has no ad in {}", args.texts.display()))?;
        let spans = adjudicate(&records)
            .with_context(|| format!("adjudicating doc_id {doc_id:?}"))?;
        let len = char_len(text);
        if let Some(bad) = spans.iter().find(|s| s.end > len) {
            bail!(
                "doc_id {doc_id:?}: span ({}, {}) exceeds text length {len}",
                bad.start,
                bad.end
            );
        }
        span_total += spans.len();
        golds.push(GoldDocument {
            doc_id,
            text: text.clone(),
            spans,
            industry: industry.to_string(),
        });
    }
    if golds.is_empty() {
        bail!("no documents to adjudicate in {}", args.input.display());
    }
    write_gold(&args.output, &golds)?;
    println!(
        "wrote {} gold document(s) to {} ({:.2} spans per document)",
        golds.len(),
        args.output.display(),
        span_total as f64 / golds.len() as f64
    );
    Ok(())
}

fn format_kappa(kappa: Option<f64>) -> String {
    match kappa {
        Some(k) => format!("{k:.3}"),
        None => "undefined".to_string(),
    }
}

fn cmd_agreement(args: AgreementArgs) -> Result<()> {
    let annotations = read_annotations(&args.input)?;
    let texts = match &args.texts {
        Some(path) => {
            let ads = load_ads(path)?;
            Some(
                ads.corpus
                    .records
                    .iter()
                    .map(|ad| (ad.id.clone(), char_len(&ad.text())))
                    .collect::<BTreeMap<String, usize>>(),
            )
        }
        None => {
            log::warn!(
                "no --texts given: using each document's largest annotated offset as its length"
            );
            None
        }
    };

    let n_records = annotations.len();
    let n_spans: usize = annotations.iter().map(|r| r.spans.len()).sum();
    let groups = group_by_doc(annotations);

    // Document text lengths, from the ads file or the annotations themselves.
    let mut doc_len: BTreeMap<&str, usize> = BTreeMap::new();
    for (doc_id, records) in &groups {
        let len = match &texts {
            Some(table) => *table
                .get(doc_id.as_str())
                .ok_or_else(|| anyhow::anyhow!("doc_id {doc_id:?} missing from the texts file"))?,
            None => records
                .iter()
                .flat_map(|r| r.spans.iter().map(|s| s.end))
                .max()
                .unwrap_or(1),
        };
        doc_len.insert(doc_id.as_str(), len);
    }

    // Pool per annotator pair across documents.
    type PairDocs<'a> = Vec<(&'a [SpanAnnotation], &'a [SpanAnnotation], usize)>;
    let mut pairs: BTreeMap<(&str, &str), PairDocs> = BTreeMap::new();
    for (doc_id, records) in &groups {
        let len = doc_len[doc_id.as_str()];
        for i in 0..records.len() {
            for j in i + 1..records.len() {
                let (a, b) = (&records[i], &records[j]);
                let key = if a.annotator_id <= b.annotator_id {
                    (a.annotator_id.as_str(), b.annotator_id.as_str())
                } else {
                    (b.annotator_id.as_str(), a.annotator_id.as_str())
                };
                pairs
                    .entry(key)
                    .or_default()
                    .push((a.spans.as_slice(), b.spans.as_slice(), len));
            }
        }
    }
    if pairs.is_empty() {
        bail!("no document has two or more annotators");
    }

    let mut pooled: PairDocs = Vec::new();
    for ((a, b), docs) in &pairs {
        let kappa = token_kappa(docs);
        let f1_docs: Vec<(&[SpanAnnotation], &[SpanAnnotation])> =
            docs.iter().map(|&(x, y, _)| (x, y)).collect();
        let f1 = pairwise_span_f1(&f1_docs);
        println!(
            "pair {a}/{b}: token kappa {} span F1 {:.3} ({} document(s))",
            format_kappa(kappa),
            f1,
            docs.len()
        );
        pooled.extend_from_slice(docs);
    }
    let pooled_kappa = token_kappa(&pooled);
    let pooled_f1_docs: Vec<(&[SpanAnnotation], &[SpanAnnotation])> =
        pooled.iter().map(|&(x, y, _)| (x, y)).collect();
    println!(
        "pooled: token kappa {} span F1 {:.3} ({} pair(s))",
        format_kappa(pooled_kappa),
        pairwise_span_f1(&pooled_f1_docs),
        pairs.len()
    );
    println!(
        "spans per annotator record: {:.2}",
        n_spans as f64 / n_records.max(1) as f64
    );

    if args.per_label {
        let taxonomy = Taxonomy::builtin();
        for label in taxonomy.labels() {
            let mut counts = AgreementCounts::default();
            for &(a, b, len) in &pooled {
                counts.add(agreement_counts(a, b, len, Some(label.index)));
            }
            println!(
                "label ({}) {}: token kappa {}",
                label.index,
                label.name,
                format_kappa(cohen_kappa(&counts))
            );
        }
    }
    Ok(())
}

fn print_train_log(log: &TrainLog) {
    for epoch in &log.epochs {
        println!(
            "epoch {:>3}: train loss {:.6} dev loss {:.6}{}",
            epoch.epoch,
            epoch.train_loss,
            epoch.dev_loss,
            if epoch.improved { " *" } else { "" }
        );
    }
    println!(
        "best epoch {} (dev loss {:.6})",
        log.best_epoch, log.best_dev_loss
    );
}

fn read_gold_pair(train: &Path, dev: Option<&Path>) -> Result<(Vec<GoldDocument>, Vec<GoldDocument>)> {
    let train_docs = read_gold(train)?;
    if train_docs.is_empty() {
        bail!("no training documents in {}", train.display());
    }
    let dev_docs = match dev {
        Some(path) => read_gold(path)?,
        None => Vec::new(),
    };
    Ok((train_docs, dev_docs))
}

fn cmd_train_span(args: TrainSpanArgs) -> Result<()> {
    let (train_docs, dev_docs) = read_gold_pair(&args.train, args.dev.as_deref())?;
    let mut config = AspectConfig::new(args.encoder.config());
    config.threshold = args.threshold;
    let mut train_config = args.optim.apply(TrainConfig::span());
    train_config.crf_weight = args.crf_weight;
    train_config.bce_weight = args.bce_weight;

    let mut model = aspects::SpanTaggerModel::init(config, train_config.seed);
    let log = train_span_model(&mut model, &train_docs, &dev_docs, &train_config)?;
    print_train_log(&log);
    save_model(&args.output, &AnyModel::Span(model))?;
    println!("saved span model to {}", args.output.display());
    Ok(())
}

fn cmd_train_doc(args: TrainDocArgs) -> Result<()> {
    let (train_docs, dev_docs) = read_gold_pair(&args.train, args.dev.as_deref())?;
    let mut config = AspectConfig::new(args.encoder.config());
    config.threshold = args.threshold;
    let train_config = args.optim.apply(TrainConfig::doc());

    let mut model = aspects::DocClassifierModel::init(config, train_config.seed);
    let log = train_doc_model(&mut model, &train_docs, &dev_docs, &train_config)?;
    print_train_log(&log);
    save_model(&args.output, &AnyModel::Doc(model))?;
    println!("saved doc model to {}", args.output.display());
    Ok(())
}

/// Loads an embeddings file into a doc_id -> vectors map.
fn embedding_table(path: &Path) -> Result<BTreeMap<String, Vec<Vec<f64>>>> {
    let mut table = BTreeMap::new();
    for record in read_embeddings(path)? {
        if table.insert(record.doc_id.clone(), record.vectors).is_some() {
            bail!("duplicate embeddings for doc_id {:?}", record.doc_id);
        }
    }
    Ok(table)
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let ads = load_ads(&args.input)?;
    if !ads.rejects.is_empty() {
        log::warn!("{} malformed line(s) in {}", ads.rejects.len(), args.input.display());
    }
    if ads.corpus.is_empty() {
        bail!("no records to predict over in {}", args.input.display());
    }
    let embeddings = match &args.embeddings {
        Some(path) => embedding_table(path)?,
        None => BTreeMap::new(),
    };

    match model {
        AnyModel::Span(model) => {
            let mut records = Vec::with_capacity(ads.corpus.len());
            for ad in &ads.corpus.records {
                let text = ad.text();
                let preds = match embeddings.get(&ad.id) {
                    Some(vectors) => {
                        let tokens = tokenize(&text, model.config.encoder.mode)?;
                        let enc = Encoded::from_vectors(vectors, model.config.encoder.dim)?;
                        if enc.n != tokens.len() {
                            bail!(
                                "doc_id {:?}: {} imported vector(s) for {} token(s)",
                                ad.id,
                                enc.n,
                                tokens.len()
                            );
                        }
                        model.predict_encoded(&tokens, &enc)
                    }
                    None => model.predict(&text)?,
                };
                records.push(SpanPredictionRecord::from_predictions(&ad.id, &preds));
            }
            write_span_predictions(&args.output, &records)?;
            println!(
                "wrote span predictions for {} document(s) to {}",
                records.len(),
                args.output.display()
            );
        }
        AnyModel::Doc(model) => {
            let mut records = Vec::with_capacity(ads.corpus.len());
            for ad in &ads.corpus.records {
                let text = ad.text();
                let pred = match embeddings.get(&ad.id) {
                    Some(vectors) => {
                        let enc = Encoded::from_vectors(vectors, model.config.encoder.dim)?;
                        model.predict_encoded(&enc)
                    }
                    None => model.predict(&text)?,
                };
                records.push(DocPredictionRecord::from_prediction(&ad.id, &pred));
            }
            write_doc_predictions(&args.output, &records)?;
            println!(
                "wrote doc predictions for {} document(s) to {}",
                records.len(),
                args.output.display()
            );
        }
        AnyModel::Ctr(_) => bail!("CTR models are evaluated with eval-ctr, not predict"),
    }
    Ok(())
}

/// Which wire format a predictions file uses.
enum PredictionKind {
    Span,
    Doc,
}

fn sniff_predictions(path: &Path) -> Result<PredictionKind> {
    let contents = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let first = contents
        .lines()
        .find(|line| !line.trim().is_empty())
        .ok_or_else(|| anyhow::anyhow!("{} is empty", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(first)
        .with_context(|| format!("parsing the first record of {}", path.display()))?;
    let object = value
        .as_object()
        .ok_or_else(|| anyhow::anyhow!("{}: records must be JSON objects", path.display()))?;
    if object.contains_key("spans") {
        Ok(PredictionKind::Span)
    } else if object.contains_key("labels") {
        Ok(PredictionKind::Doc)
    } else {
        bail!(
            "{}: records carry neither \"spans\" nor \"labels\"",
            path.display()
        )
    }
}

/// Adds coarse groups to a span prediction's label set; an added group
/// inherits the highest probability among the labels that pulled it in.
fn close_span_prediction(pred: &mut SpanPrediction) {
    let taxonomy = Taxonomy::builtin();
    let present: Vec<u8> = pred.labels.iter().map(|&(l, _)| l).collect();
    for label in close_label_set(&present) {
        if present.contains(&label) {
            continue;
        }
        let prob = pred
            .labels
            .iter()
            .filter(|&&(l, _)| taxonomy.coarse_of(l) == label)
            .map(|&(_, p)| p)
            .fold(f64::NEG_INFINITY, f64::max);
        pred.labels.push((label, prob));
    }
    pred.labels.sort_by(|a, b| a.0.cmp(&b.0));
}

/// Rebuilds gold documents with every span's label set hierarchy-closed.
fn close_gold(docs: &[GoldDocument]) -> Result<Vec<GoldDocument>> {
    docs.iter()
        .map(|doc| {
            let spans = doc
                .spans
                .iter()
                .map(|s| SpanAnnotation::new(s.start, s.end, close_label_set(&s.labels)))
                .collect::<adappeal_core::Result<Vec<_>>>()?;
            Ok(GoldDocument {
                doc_id: doc.doc_id.clone(),
                text: doc.text.clone(),
                spans,
                industry: doc.industry.clone(),
            })
        })
        .collect()
}

enum EvalReport {
    Span(SpanEvalReport),
    Doc(DocEvalReport),
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let mut golds = read_gold(&args.gold)?;
    if golds.is_empty() {
        bail!("no gold documents in {}", args.gold.display());
    }
    if args.hierarchy_closure {
        golds = close_gold(&golds)?;
    }

    let report = if let Some(path) = &args.predictions {
        match sniff_predictions(path)? {
            PredictionKind::Span => {
                let records = read_span_predictions(path)?;
                let mut preds = Vec::with_capacity(records.len());
                for record in &records {
                    let mut spans = record.to_predictions()?;
                    if args.hierarchy_closure {
                        spans.iter_mut().for_each(close_span_prediction);
                    }
                    preds.push((record.doc_id.clone(), spans));
                }
                EvalReport::Span(evaluate_span_predictions(&golds, &preds, EvalMode::Pred)?)
            }
            PredictionKind::Doc => {
                let records = read_doc_predictions(path)?;
                let preds: Vec<(String, Vec<u8>)> = records
                    .iter()
                    .map(|r| {
                        let labels = if args.hierarchy_closure {
                            close_label_set(&r.labels)
                        } else {
                            r.labels.clone()
                        };
                        (r.doc_id.clone(), labels)
                    })
                    .collect();
                EvalReport::Doc(evaluate_doc_predictions(&golds, &preds)?)
            }
        }
    } else {
        let path = args.model.as_ref().expect("clap enforces one source");
        match load_model(path)? {
            AnyModel::Span(model) => {
                let mode = if args.oracle_spans {
                    EvalMode::Oracle
                } else {
                    EvalMode::Pred
                };
                let mut preds = Vec::with_capacity(golds.len());
                for doc in &golds {
                    let mut spans = match mode {
                        EvalMode::Pred => model.predict(&doc.text)?,
                        EvalMode::Oracle => {
                            let bounds: Vec<(usize, usize)> =
                                doc.spans.iter().map(|s| (s.start, s.end)).collect();
                            model.predict_with_boundaries(&doc.text, &bounds)?
                        }
                    };
                    if args.hierarchy_closure {
                        spans.iter_mut().for_each(close_span_prediction);
                    }
                    preds.push((doc.doc_id.clone(), spans));
                }
                EvalReport::Span(evaluate_span_predictions(&golds, &preds, mode)?)
            }
            AnyModel::Doc(model) => {
                if args.oracle_spans {
                    bail!("--oracle-spans applies to span models only");
                }
                let mut preds = Vec::with_capacity(golds.len());
                for doc in &golds {
                    let p = model.predict(&doc.text)?;
                    let mut labels: Vec<u8> = p.labels.iter().map(|&(l, _)| l).collect();
                    if args.hierarchy_closure {
                        labels = close_label_set(&labels);
                    }
                    preds.push((doc.doc_id.clone(), labels));
                }
                EvalReport::Doc(evaluate_doc_predictions(&golds, &preds)?)
            }
            AnyModel::Ctr(_) => bail!("CTR models are evaluated with eval-ctr"),
        }
    };

    let json = match &report {
        EvalReport::Span(r) => {
            println!("mode {:?}, {} document(s)", r.mode, r.n_docs);
            println!(
                "span detection: P {:.3} R {:.3} F1 {:.3}",
                r.detection.precision(),
                r.detection.recall(),
                r.detection_f1
            );
            print_label_table(&r.per_label, r.macro_f1, r.micro_f1);
            serde_json::to_string_pretty(r)?
        }
        EvalReport::Doc(r) => {
            println!("doc labels, {} document(s)", r.n_docs);
            print_label_table(&r.per_label, r.macro_f1, r.micro_f1);
            serde_json::to_string_pretty(r)?
        }
    };
    if let Some(path) = &args.output {
        std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote report to {}", path.display());
    }
    Ok(())
}

fn print_label_table(
    per_label: &[adappeal_core::eval::LabelScore],
    macro_f1: Option<f64>,
    micro_f1: f64,
) {
    for score in per_label {
        if score.support == 0 && !score.counts.is_active() {
            continue;
        }
        println!(
            "({:>2}) {:<28} P {:.3} R {:.3} F1 {:.3} support {}",
            score.label, score.name, score.precision, score.recall, score.f1, score.support
        );
    }
    let macro_text = match macro_f1 {
        Some(f) => format!("{f:.3}"),
        None => "undefined (no label has gold support)".to_string(),
    };
    println!("micro F1 {micro_f1:.3}, macro F1 {macro_text}");
}

fn cmd_train_ctr(args: TrainCtrArgs) -> Result<()> {
    let provider = match &args.aspects {
        AspectsArg::None => AspectProvider::None,
        AspectsArg::Span(path) => AspectProvider::Span {
            model: load_span_model(path)?,
        },
        AspectsArg::Doc(path) => AspectProvider::Doc {
            model: load_doc_model(path)?,
        },
    };

    let train_ads = load_ads(&args.train)?;
    let (train_examples, _) = prepare_examples(&train_ads.corpus, &provider)?;
    if train_examples.is_empty() {
        bail!("no usable training examples in {}", args.train.display());
    }
    let dev_examples = match &args.dev {
        Some(path) => {
            let dev_ads = load_ads(path)?;
            prepare_examples(&dev_ads.corpus, &provider)?.0
        }
        None => Vec::new(),
    };

    let mut config = CtrConfig::new(args.encoder.config());
    config.ad_dim = args.ad_dim;
    config.aspect_dim = args.aspect_dim;
    config.weight_by_impressions = args.weight_by_impressions;
    let train_config = args.optim.apply(TrainConfig::ctr());

    let mut model = CtrModel::init(config, provider, train_config.seed);
    let log = train_ctr(&mut model, &train_examples, &dev_examples, &train_config)?;
    print_train_log(&log);
    save_model(&args.output, &AnyModel::Ctr(model))?;
    println!("saved CTR model to {}", args.output.display());
    Ok(())
}

fn cmd_eval_ctr(args: EvalCtrArgs) -> Result<()> {
    let model = load_ctr_model(&args.model)?;
    let ads = load_ads(&args.test)?;
    let (examples, _) = prepare_examples(&ads.corpus, &model.aspects)?;
    if examples.is_empty() {
        bail!("no usable examples in {}", args.test.display());
    }
    let eval = evaluate_ctr(&model, &examples, args.auc_mode.into())?;
    let auc = match eval.auc {
        Some(a) => format!("{a:.4}"),
        None => "-".to_string(),
    };
    println!(
        "aspects {:<5} n {:>6} AUC {} RMSE {:.6} MAE {:.6}",
        model.aspects.kind(),
        eval.n_examples,
        auc,
        eval.rmse,
        eval.mae
    );
    Ok(())
}

/// Reads either prediction format and reduces each document to label bits.
fn prediction_bits(path: &Path) -> Result<Vec<(String, LabelVector)>> {
    match sniff_predictions(path)? {
        PredictionKind::Span => Ok(read_span_predictions(path)?
            .iter()
            .map(|r| (r.doc_id.clone(), r.doc_label_bits()))
            .collect()),
        PredictionKind::Doc => Ok(read_doc_predictions(path)?
            .iter()
            .map(|r| (r.doc_id.clone(), r.label_bits()))
            .collect()),
    }
}

fn cmd_correlate(args: CorrelateArgs) -> Result<()> {
    let ads = load_ads(&args.ads)?;
    let preds = prediction_bits(&args.predictions)?;
    let mut report = correlate(&ads.corpus, &preds, args.min_cases)?;

    if let Some(wanted) = &args.industries {
        let wanted: Vec<&str> = wanted.iter().map(|name| canonical_industry(name)).collect();
        report.industries.retain(|col| wanted.contains(&col.industry.as_str()));
        if report.industries.is_empty() {
            log::warn!("none of the requested industries met --min-cases {}", args.min_cases);
        }
    }

    std::fs::write(&args.output, report.to_csv())
        .with_context(|| format!("writing {}", args.output.display()))?;
    let json_path = args.output.with_extension("json");
    std::fs::write(&json_path, report.to_json())
        .with_context(|| format!("writing {}", json_path.display()))?;
    println!("wrote {} and {}", args.output.display(), json_path.display());

    if args.effective {
        print_effective(&report);
    }
    Ok(())
}

fn print_effective(report: &CorrelationReport) {
    let effective = report.effective_aspects();
    if effective.is_empty() {
        println!("no cell clears |r| > 0.25");
        return;
    }
    for cell in effective {
        println!(
            "{}: ({}) {} r {:+.3} ({:?})",
            cell.industry, cell.label, cell.name, cell.r, cell.strength
        );
    }
}

fn cmd_expressions(args: ExpressionsArgs) -> Result<()> {
    let golds = read_gold(&args.gold)?;
    if golds.is_empty() {
        bail!("no gold documents in {}", args.gold.display());
    }
    let label = Taxonomy::builtin().resolve(&args.label)?;
    let rows = extract_expressions(&golds, label.index, args.industry.as_deref(), args.top_k);
    if rows.is_empty() {
        log::warn!(
            "label ({}) {} has no spans{}",
            label.index,
            label.name,
            args.industry
                .as_deref()
                .map(|i| format!(" in industry {i:?}"))
                .unwrap_or_default()
        );
    }
    for (text, count) in rows {
        println!("{count}\t{text}");
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let mut config = match args.preset {
        PresetArg::Detection => SynthConfig::default_detection(),
        PresetArg::Ctr => SynthConfig::default_ctr(),
    };
    if let Some(n) = args.n_docs {
        if n == 0 {
            bail!("--n-docs must be at least 1");
        }
        config.n_docs = n;
    }
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let output = generate(&config, args.seed)?;

    let ads_path = args.out_dir.join("ads.jsonl");
    let gold_path = args.out_dir.join("gold.jsonl");
    write_ads(&ads_path, &output.ads)?;
    write_gold(&gold_path, &output.gold)?;
    println!(
        "wrote {} ({} ad(s)) and {} ({} gold document(s))",
        ads_path.display(),
        output.ads.len(),
        gold_path.display(),
        output.gold.len()
    );
    Ok(())
}
