//! Implementations of the pipeline subcommands.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;

use trialmine::baselines::{
    bow_features, majority_baseline, predict_logistic, random_baseline_expected, train_logistic,
    IdfTable, LogisticConfig, MeshClassifier, MeshIndex, DEFAULT_NO_MATCH_PENALTY,
};
use trialmine::corpus::{parse_corpus, SectionMap, Segmenter};
use trialmine::dataset::{
    build_pretrain_dataset, encode_finetune, encode_pretrain, split_holdout, validate_finetune,
    EncodeOptions, EncodedInstance, FinetuneInstance, PretrainInstance, ResultLabel, Tokenizer,
};
use trialmine::disentangle::LabelVocabulary;
use trialmine::eval::{
    evaluation_report, report_markdown, write_prediction_csv, PredictionRecord, SystemEntry,
};
use trialmine::jsonl::{read_jsonl, write_jsonl};
use trialmine::mine::{corpus_stats, mine_corpus, Lexicon};
use trialmine::model::{
    finetune, init_model, load_checkpoint, pretrain, predict_result, save_checkpoint,
    CheckpointMeta, EpochStat, FinetuneMode, ModelConfig, TrainConfig,
};
use trialmine::synth::{generate, generate_finetune, SynthConfig};
use trialmine::{adversarial, Error, Result};

use crate::config::{get_parsed, parse_config_file, Snapshot};

// ---------------------------------------------------------------------------
// synth

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Number of documents.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Corpus output (JSONL documents).
    #[arg(long)]
    out: PathBuf,
    /// Gold records output (default: <out>.gold.jsonl).
    #[arg(long)]
    gold_out: Option<PathBuf>,
    /// Also emit fine-tuning instances from the same latent world.
    #[arg(long)]
    finetune_out: Option<PathBuf>,
    #[arg(long)]
    finetune_n: Option<usize>,
    #[arg(long)]
    finetune_seed: Option<u64>,
    #[arg(long, default_value_t = 42)]
    world_seed: u64,
    #[arg(long, default_value_t = 20)]
    interventions: usize,
    #[arg(long, default_value_t = 0.14)]
    eq_band: f64,
    #[arg(long, default_value_t = 0.35)]
    trap_rate: f64,
    #[arg(long, default_value_t = 0.5)]
    named_rate: f64,
}

pub fn run_synth(args: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        seed: args.seed,
        n_docs: args.n,
        world_seed: args.world_seed,
        n_interventions: args.interventions,
        eq_band: args.eq_band,
        trap_rate: args.trap_rate,
        named_section_rate: args.named_rate,
    };
    let corpus = generate(&config);
    write_jsonl(&args.out, &corpus.documents)?;
    let gold_out = args
        .gold_out
        .clone()
        .unwrap_or_else(|| suffixed(&args.out, ".gold.jsonl"));
    write_jsonl(&gold_out, &corpus.gold)?;
    eprintln!(
        "synth: wrote {} documents to {} and gold records to {}",
        corpus.documents.len(),
        args.out.display(),
        gold_out.display()
    );

    if let Some(ft_out) = &args.finetune_out {
        let n = args.finetune_n.unwrap_or(args.n);
        let seed = args.finetune_seed.unwrap_or(args.seed.wrapping_add(1000));
        let instances = generate_finetune(&config, seed, n);
        write_jsonl(ft_out, &instances)?;
        eprintln!("synth: wrote {n} fine-tune instances to {}", ft_out.display());
    }

    let mut snap = Snapshot::new("synth");
    snap.put("seed", args.seed);
    snap.put("n", args.n);
    snap.put("world_seed", args.world_seed);
    snap.put("interventions", args.interventions);
    snap.put("eq_band", args.eq_band);
    snap.put("trap_rate", args.trap_rate);
    snap.put("named_rate", args.named_rate);
    snap.put_opt("finetune_n", &args.finetune_n);
    snap.write_beside(&args.out)
}

// ---------------------------------------------------------------------------
// mine

#[derive(Args)]
pub struct MineArgs {
    /// Corpus input (JSONL documents).
    #[arg(long)]
    corpus: PathBuf,
    /// Mined evidence records output (JSONL).
    #[arg(long)]
    out: PathBuf,
    /// Optional chunked-abstract output (JSONL).
    #[arg(long)]
    chunks_out: Option<PathBuf>,
    /// Optional rejected-sentence log (JSONL).
    #[arg(long)]
    rejected_out: Option<PathBuf>,
    /// Comparative lexicon TSV override.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Section-name mapping TSV override.
    #[arg(long)]
    section_map: Option<PathBuf>,
    /// Label vocabulary TSV override.
    #[arg(long)]
    vocab: Option<PathBuf>,
}

fn load_lexicon(path: &Option<PathBuf>) -> Result<Lexicon> {
    match path {
        Some(p) => {
            let content = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Lexicon::from_tsv(&content)
        }
        None => Ok(Lexicon::default()),
    }
}

fn load_vocab(path: &Option<PathBuf>) -> Result<LabelVocabulary> {
    match path {
        Some(p) => {
            let content = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            LabelVocabulary::from_tsv(&content)
        }
        None => Ok(LabelVocabulary::default()),
    }
}

fn load_section_map(path: &Option<PathBuf>) -> Result<SectionMap> {
    match path {
        Some(p) => {
            let content = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            SectionMap::from_tsv(&content)
        }
        None => Ok(SectionMap::default()),
    }
}

pub fn run_mine(args: MineArgs) -> Result<()> {
    let lexicon = load_lexicon(&args.lexicon)?;
    let vocab = load_vocab(&args.vocab)?;
    let map = load_section_map(&args.section_map)?;
    let segmenter = Segmenter::default();

    let file = File::open(&args.corpus).map_err(|e| Error::io(&args.corpus, e))?;
    let (docs, summary) = parse_corpus(BufReader::new(file))?;
    for issue in summary.issues.iter().take(20) {
        eprintln!("mine: line {}: {}", issue.line, issue.message);
    }
    if summary.skipped > 20 {
        eprintln!("mine: ... {} malformed lines total", summary.skipped);
    }

    if let Some(chunks_out) = &args.chunks_out {
        let chunks: Vec<_> = docs
            .iter()
            .map(|doc| {
                trialmine::corpus::chunk_abstract(doc, &map, &segmenter, |s| {
                    trialmine::mine::detect_comparative(
                        &trialmine::disentangle::mask_functional_tokens(s),
                        &lexicon,
                    )
                    .is_some()
                })
            })
            .collect();
        write_jsonl(chunks_out, &chunks)?;
    }

    let (records, rejected) = mine_corpus(&docs, &lexicon, &vocab, &map, &segmenter);
    write_jsonl(&args.out, &records)?;
    if let Some(rejected_out) = &args.rejected_out {
        write_jsonl(rejected_out, &rejected)?;
    }

    let stats = corpus_stats(&records);
    eprintln!(
        "mine: {} documents ({} lines skipped), {} records ({} rejected)",
        summary.documents,
        summary.skipped,
        records.len(),
        rejected.len()
    );
    if let Some(frac) = stats.fractions {
        eprintln!(
            "mine: direction distribution sup {:.1}% / eq {:.1}% / inf {:.1}%",
            frac[0] * 100.0,
            frac[1] * 100.0,
            frac[2] * 100.0
        );
    }

    let mut snap = Snapshot::new("mine");
    snap.put("corpus", args.corpus.display());
    snap.put("documents", summary.documents);
    snap.put("skipped_lines", summary.skipped);
    snap.put("records", records.len());
    snap.put("rejected", rejected.len());
    snap.write_beside(&args.out)
}

// ---------------------------------------------------------------------------
// stats

#[derive(Args)]
pub struct StatsArgs {
    /// Mined records input (JSONL).
    #[arg(long)]
    records: PathBuf,
    /// Distribution output (JSON).
    #[arg(long)]
    out: PathBuf,
}

pub fn run_stats(args: StatsArgs) -> Result<()> {
    let records: Vec<trialmine::mine::ImplicitEvidenceRecord> = read_jsonl(&args.records)?;
    let stats = corpus_stats(&records);
    let json = serde_json::to_string_pretty(&stats)
        .map_err(|e| Error::invalid("stats", e.to_string()))?;
    std::fs::write(&args.out, json.as_bytes()).map_err(|e| Error::io(&args.out, e))?;
    eprintln!(
        "stats: {} records, counts sup/eq/inf = {:?}",
        stats.total, stats.counts
    );
    let mut snap = Snapshot::new("stats");
    snap.put("records", args.records.display());
    snap.write_beside(&args.out)
}

// ---------------------------------------------------------------------------
// build

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DatasetKind {
    Pretrain,
    Finetune,
}

#[derive(Args)]
pub struct BuildArgs {
    #[arg(long, value_enum)]
    kind: DatasetKind,
    /// Mined records (pretrain) or fine-tune instances (finetune), JSONL.
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 13)]
    seed: u64,
    /// Share of records that get an adversarial counterpart (pretrain).
    #[arg(long, default_value_t = 1.0)]
    adversarial_ratio: f64,
    /// Shorthand for --adversarial-ratio 0 (the no-adversarial ablation).
    #[arg(long)]
    no_adversarial: bool,
    /// Add swapped adversarial instances to a fine-tune dataset.
    #[arg(long)]
    with_adversarial: bool,
    /// Label vocabulary TSV override.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Label histogram output (default: <out>.histogram.json).
    #[arg(long)]
    histogram_out: Option<PathBuf>,
}

pub fn run_build(args: BuildArgs) -> Result<()> {
    let mut snap = Snapshot::new("build");
    snap.put("records", args.records.display());
    snap.put("seed", args.seed);
    match args.kind {
        DatasetKind::Pretrain => {
            let vocab = load_vocab(&args.vocab)?;
            let ratio = if args.no_adversarial { 0.0 } else { args.adversarial_ratio };
            let records: Vec<trialmine::mine::ImplicitEvidenceRecord> =
                read_jsonl(&args.records)?;
            let (instances, histogram) = build_pretrain_dataset(&records, &vocab, ratio, args.seed)?;
            write_jsonl(&args.out, &instances)?;
            let hist_out = args
                .histogram_out
                .clone()
                .unwrap_or_else(|| suffixed(&args.out, ".histogram.json"));
            let json = serde_json::to_string_pretty(&histogram)
                .map_err(|e| Error::invalid("histogram", e.to_string()))?;
            std::fs::write(&hist_out, json.as_bytes()).map_err(|e| Error::io(&hist_out, e))?;
            eprintln!(
                "build: {} instances from {} records (adversarial ratio {ratio})",
                instances.len(),
                records.len()
            );
            snap.put("kind", "pretrain");
            snap.put("adversarial_ratio", ratio);
            snap.put("instances", instances.len());
        }
        DatasetKind::Finetune => {
            let instances: Vec<FinetuneInstance> = read_jsonl(&args.records)?;
            for inst in &instances {
                validate_finetune(inst)?;
            }
            let mut out = instances.clone();
            if args.with_adversarial {
                out.extend(instances.iter().map(adversarial::make_adversarial_finetune));
            }
            write_jsonl(&args.out, &out)?;
            eprintln!(
                "build: {} fine-tune instances{}",
                out.len(),
                if args.with_adversarial { " (with adversarial)" } else { "" }
            );
            snap.put("kind", "finetune");
            snap.put("with_adversarial", args.with_adversarial);
            snap.put("instances", out.len());
        }
    }
    snap.write_beside(&args.out)
}

// ---------------------------------------------------------------------------
// shared training plumbing

#[derive(Args)]
pub struct CommonTrainArgs {
    /// Flat key = value config file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    clip_norm: Option<f64>,
    /// Held-out fraction for per-epoch accuracy reporting.
    #[arg(long)]
    holdout: Option<f64>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    ff_dim: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
}

struct ResolvedTrain {
    train: TrainConfig,
    model: ModelConfig,
    holdout: f64,
}

fn resolve_train(args: &CommonTrainArgs) -> Result<ResolvedTrain> {
    let file = match &args.config {
        Some(path) => parse_config_file(path)?,
        None => Default::default(),
    };
    let mut train = TrainConfig::default();
    let mut model = ModelConfig::default();

    if let Some(v) = get_parsed(&file, "seed")? {
        train.seed = v;
    }
    if let Some(v) = get_parsed(&file, "epochs")? {
        train.epochs = v;
    }
    if let Some(v) = get_parsed(&file, "batch_size")? {
        train.batch_size = v;
    }
    if let Some(v) = get_parsed(&file, "lr")? {
        train.learning_rate = v;
    }
    if let Some(v) = get_parsed(&file, "weight_decay")? {
        train.weight_decay = v;
    }
    if let Some(v) = get_parsed(&file, "clip_norm")? {
        train.clip_norm = v;
    }
    if let Some(v) = get_parsed(&file, "layers")? {
        model.layers = v;
    }
    if let Some(v) = get_parsed(&file, "hidden")? {
        model.hidden = v;
    }
    if let Some(v) = get_parsed(&file, "heads")? {
        model.heads = v;
    }
    if let Some(v) = get_parsed(&file, "ff_dim")? {
        model.ff_dim = v;
    }
    if let Some(v) = get_parsed(&file, "max_len")? {
        model.max_len = v;
    }
    if let Some(v) = get_parsed(&file, "dropout")? {
        model.dropout = v;
    }
    let mut holdout: f64 = get_parsed(&file, "holdout")?.unwrap_or(0.0);

    if let Some(v) = args.seed {
        train.seed = v;
    }
    if let Some(v) = args.epochs {
        train.epochs = v;
    }
    if let Some(v) = args.batch_size {
        train.batch_size = v;
    }
    if let Some(v) = args.lr {
        train.learning_rate = v;
    }
    if let Some(v) = args.weight_decay {
        train.weight_decay = v;
    }
    if let Some(v) = args.clip_norm {
        train.clip_norm = v;
    }
    if let Some(v) = args.layers {
        model.layers = v;
    }
    if let Some(v) = args.hidden {
        model.hidden = v;
    }
    if let Some(v) = args.heads {
        model.heads = v;
    }
    if let Some(v) = args.ff_dim {
        model.ff_dim = v;
    }
    if let Some(v) = args.max_len {
        model.max_len = v;
    }
    if let Some(v) = args.dropout {
        model.dropout = v;
    }
    if let Some(v) = args.holdout {
        holdout = v;
    }
    if !(0.0..0.9).contains(&holdout) {
        return Err(Error::invalid("holdout", "must be in [0, 0.9)"));
    }
    Ok(ResolvedTrain { train, model, holdout })
}

fn snapshot_train(snap: &mut Snapshot, r: &ResolvedTrain) {
    snap.put("seed", r.train.seed);
    snap.put("epochs", r.train.epochs);
    snap.put("batch_size", r.train.batch_size);
    snap.put("lr", r.train.learning_rate);
    snap.put("weight_decay", r.train.weight_decay);
    snap.put("clip_norm", r.train.clip_norm);
    snap.put("layers", r.model.layers);
    snap.put("hidden", r.model.hidden);
    snap.put("heads", r.model.heads);
    snap.put("ff_dim", r.model.ff_dim);
    snap.put("max_len", r.model.max_len);
    snap.put("dropout", r.model.dropout);
    snap.put("holdout", r.holdout);
}

fn write_curve(path: &Path, stats: &[EpochStat]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "epoch,train_loss,holdout_accuracy").map_err(|e| Error::io(path, e))?;
    for s in stats {
        let acc = s
            .holdout_accuracy
            .map(|a| format!("{a:.6}"))
            .unwrap_or_default();
        writeln!(w, "{},{:.6},{}", s.epoch, s.train_loss, acc).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// pretrain

#[derive(Args)]
pub struct PretrainArgs {
    /// Pre-training dataset (JSONL of raw instances).
    #[arg(long)]
    dataset: PathBuf,
    /// Checkpoint output, rewritten after every epoch.
    #[arg(long)]
    ckpt_out: PathBuf,
    /// Loss curve CSV (default: <ckpt-out>.curve.csv).
    #[arg(long)]
    curve_out: Option<PathBuf>,
    #[arg(long, default_value_t = 8192)]
    max_vocab: usize,
    #[arg(long, default_value_t = 1)]
    min_freq: u64,
    /// Label vocabulary TSV override.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[command(flatten)]
    common: CommonTrainArgs,
}

pub fn run_pretrain(args: PretrainArgs) -> Result<()> {
    let resolved = resolve_train(&args.common)?;
    let vocab = load_vocab(&args.vocab)?;
    let instances: Vec<PretrainInstance> = read_jsonl(&args.dataset)?;
    if instances.is_empty() {
        return Err(Error::invalid("pretrain", "empty dataset"));
    }

    let mut lines: Vec<&str> = Vec::with_capacity(instances.len() * 2);
    for inst in &instances {
        lines.push(&inst.background);
        lines.push(&inst.evidence);
    }
    let tokenizer = Tokenizer::train(lines, args.max_vocab, args.min_freq)?;

    let mut model_config = resolved.model.clone();
    model_config.vocab_size = tokenizer.vocab_size();
    model_config.label_count = vocab.len();
    let encode_opts = EncodeOptions::default();
    let encoded: Vec<EncodedInstance> = instances
        .iter()
        .map(|inst| encode_pretrain(&tokenizer, inst, &encode_opts, &vocab))
        .collect::<Result<_>>()?;

    let (train_idx, holdout_idx) = split_holdout(encoded.len(), resolved.holdout, resolved.train.seed);
    let train_set: Vec<EncodedInstance> = train_idx.iter().map(|&i| encoded[i].clone()).collect();
    let holdout_set: Vec<EncodedInstance> =
        holdout_idx.iter().map(|&i| encoded[i].clone()).collect();

    let mut params = init_model(&model_config, resolved.train.seed)?;
    let meta = CheckpointMeta {
        config: model_config.clone(),
        tokenizer_tokens: tokenizer.tokens().to_vec(),
        labels: vocab.names().map(String::from).collect(),
        encode: encode_opts,
    };
    let ckpt_out = args.ckpt_out.clone();
    let stats = pretrain(
        &mut params,
        &train_set,
        (!holdout_set.is_empty()).then_some(holdout_set.as_slice()),
        &resolved.train,
        |epoch, params, stat| {
            save_checkpoint(&ckpt_out, params, &meta)?;
            match stat.holdout_accuracy {
                Some(acc) => eprintln!(
                    "pretrain: epoch {epoch} loss {:.4} holdout acc {:.3}",
                    stat.train_loss, acc
                ),
                None => eprintln!("pretrain: epoch {epoch} loss {:.4}", stat.train_loss),
            }
            Ok(())
        },
    )?;
    if resolved.train.epochs == 0 {
        save_checkpoint(&args.ckpt_out, &params, &meta)?;
    }

    let curve_out = args
        .curve_out
        .clone()
        .unwrap_or_else(|| suffixed(&args.ckpt_out, ".curve.csv"));
    write_curve(&curve_out, &stats)?;

    let mut snap = Snapshot::new("pretrain");
    snap.put("dataset", args.dataset.display());
    snap.put("max_vocab", args.max_vocab);
    snap.put("min_freq", args.min_freq);
    snap.put("tokenizer_vocab", tokenizer.vocab_size());
    snapshot_train(&mut snap, &resolved);
    snap.write_beside(&args.ckpt_out)
}

// ---------------------------------------------------------------------------
// finetune

#[derive(Args)]
pub struct FinetuneArgs {
    /// Fine-tuning dataset (JSONL instances).
    #[arg(long)]
    dataset: PathBuf,
    /// Pre-trained checkpoint to start from; omit for the fresh-model
    /// ablation.
    #[arg(long)]
    ckpt_in: Option<PathBuf>,
    #[arg(long)]
    ckpt_out: PathBuf,
    #[arg(long)]
    curve_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModeArg::Full)]
    mode: ModeArg,
    /// Explicit-evidence element order, e.g. "I,O,C".
    #[arg(long)]
    layout: Option<String>,
    /// Drop an input element (repeatable): B, P, I, C or O.
    #[arg(long = "drop")]
    drop: Vec<String>,
    /// Tokenizer cap when no checkpoint is given.
    #[arg(long, default_value_t = 8192)]
    max_vocab: usize,
    #[arg(long, default_value_t = 1)]
    min_freq: u64,
    #[command(flatten)]
    common: CommonTrainArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModeArg {
    Full,
    HeadOnly,
}

fn encode_options_from_flags(
    base: EncodeOptions,
    layout: &Option<String>,
    drop: &[String],
) -> Result<EncodeOptions> {
    let mut opts = base;
    if let Some(layout) = layout {
        opts.layout = EncodeOptions::parse_layout(layout)?;
    }
    opts.drop_background = false;
    opts.drop.clear();
    for d in drop {
        match d.trim().to_uppercase().as_str() {
            "B" | "BACKGROUND" => opts.drop_background = true,
            other => opts
                .drop
                .push(trialmine::dataset::PicoElement::parse(other)?),
        }
    }
    Ok(opts)
}

pub fn run_finetune(args: FinetuneArgs) -> Result<()> {
    let resolved = resolve_train(&args.common)?;
    let instances: Vec<FinetuneInstance> = read_jsonl(&args.dataset)?;
    if instances.is_empty() {
        return Err(Error::invalid("finetune", "empty dataset"));
    }
    for inst in &instances {
        validate_finetune(inst)?;
    }

    let (mut params, mut meta, from) = match &args.ckpt_in {
        Some(path) => {
            let (params, meta) = load_checkpoint(path)?;
            (params, meta, format!("{}", path.display()))
        }
        None => {
            // fresh-model ablation: tokenizer trained on this dataset
            let mut lines: Vec<String> = Vec::new();
            for inst in &instances {
                lines.push(inst.background.clone());
                lines.push(inst.intervention.clone());
                lines.push(inst.comparator.clone());
                lines.push(inst.outcome.clone());
                if let Some(p) = &inst.population {
                    lines.push(p.clone());
                }
            }
            let tokenizer =
                Tokenizer::train(lines.iter().map(String::as_str), args.max_vocab, args.min_freq)?;
            let vocab = LabelVocabulary::default();
            let mut model_config = resolved.model.clone();
            model_config.vocab_size = tokenizer.vocab_size();
            model_config.label_count = vocab.len();
            let params = init_model(&model_config, resolved.train.seed)?;
            let meta = CheckpointMeta {
                config: model_config,
                tokenizer_tokens: tokenizer.tokens().to_vec(),
                labels: vocab.names().map(String::from).collect(),
                encode: EncodeOptions::default(),
            };
            (params, meta, "fresh".to_string())
        }
    };

    meta.encode = encode_options_from_flags(meta.encode.clone(), &args.layout, &args.drop)?;
    let mut tokenizer = Tokenizer::from_tokens(meta.tokenizer_tokens.clone());
    tokenizer.rehydrate();

    let encoded: Vec<EncodedInstance> = instances
        .iter()
        .map(|inst| encode_finetune(&tokenizer, inst, &meta.encode))
        .collect();
    let (train_idx, holdout_idx) =
        split_holdout(encoded.len(), resolved.holdout, resolved.train.seed);
    let train_set: Vec<EncodedInstance> = train_idx.iter().map(|&i| encoded[i].clone()).collect();
    let holdout_set: Vec<EncodedInstance> =
        holdout_idx.iter().map(|&i| encoded[i].clone()).collect();

    let mode = match args.mode {
        ModeArg::Full => FinetuneMode::Full,
        ModeArg::HeadOnly => FinetuneMode::HeadOnly,
    };
    let ckpt_out = args.ckpt_out.clone();
    let meta_clone = meta.clone();
    let stats = finetune(
        &mut params,
        &train_set,
        (!holdout_set.is_empty()).then_some(holdout_set.as_slice()),
        &resolved.train,
        mode,
        |epoch, params, stat| {
            save_checkpoint(&ckpt_out, params, &meta_clone)?;
            eprintln!("finetune: epoch {epoch} loss {:.4}", stat.train_loss);
            Ok(())
        },
    )?;
    if resolved.train.epochs == 0 {
        save_checkpoint(&args.ckpt_out, &params, &meta)?;
    }

    let curve_out = args
        .curve_out
        .clone()
        .unwrap_or_else(|| suffixed(&args.ckpt_out, ".curve.csv"));
    write_curve(&curve_out, &stats)?;

    let mut snap = Snapshot::new("finetune");
    snap.put("dataset", args.dataset.display());
    snap.put("from", from);
    snap.put("mode", match mode {
        FinetuneMode::Full => "full",
        FinetuneMode::HeadOnly => "head_only",
    });
    snap.put(
        "layout",
        meta.encode
            .layout
            .iter()
            .map(|e| e.letter().to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    snap.put("drop_background", meta.encode.drop_background);
    snapshot_train(&mut snap, &resolved);
    snap.write_beside(&args.ckpt_out)
}

// ---------------------------------------------------------------------------
// predict

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Fine-tune-format dataset to predict on (JSONL).
    #[arg(long)]
    dataset: PathBuf,
    /// Prediction CSV output.
    #[arg(long)]
    out: PathBuf,
    /// Optional `[CLS]`-embedding CSV (id, label, h_1..h_H).
    #[arg(long)]
    embeddings_out: Option<PathBuf>,
}

pub fn run_predict(args: PredictArgs) -> Result<()> {
    let (params, meta) = load_checkpoint(&args.ckpt)?;
    let mut tokenizer = Tokenizer::from_tokens(meta.tokenizer_tokens.clone());
    tokenizer.rehydrate();
    let instances: Vec<FinetuneInstance> = read_jsonl(&args.dataset)?;
    let encoded: Vec<EncodedInstance> = instances
        .iter()
        .map(|inst| encode_finetune(&tokenizer, inst, &meta.encode))
        .collect();

    let (pred_ids, probs) = predict_result(&params, &encoded)?;
    let records: Vec<PredictionRecord> = instances
        .iter()
        .enumerate()
        .map(|(i, inst)| PredictionRecord {
            id: format!("{i:06}"),
            gold: inst.result,
            pred: ResultLabel::from_index(pred_ids[i]).expect("argmax over 3 classes"),
            p_up: probs.get(i, 0),
            p_nodiff: probs.get(i, 1),
            p_down: probs.get(i, 2),
        })
        .collect();
    write_prediction_csv(&args.out, &records)?;
    eprintln!("predict: wrote {} predictions to {}", records.len(), args.out.display());

    if let Some(emb_out) = &args.embeddings_out {
        let embeddings = trialmine::model::export_embeddings(&params, &encoded)?;
        let file = File::create(emb_out).map_err(|e| Error::io(emb_out, e))?;
        let mut w = BufWriter::new(file);
        let header: Vec<String> = (1..=embeddings.cols).map(|j| format!("h_{j}")).collect();
        writeln!(w, "id,label,{}", header.join(",")).map_err(|e| Error::io(emb_out, e))?;
        for (i, inst) in instances.iter().enumerate() {
            let row: Vec<String> =
                embeddings.row(i).iter().map(|v| format!("{v:.6}")).collect();
            writeln!(w, "{i:06},{},{}", inst.result.as_str(), row.join(","))
                .map_err(|e| Error::io(emb_out, e))?;
        }
        w.flush().map_err(|e| Error::io(emb_out, e))?;
    }

    let mut snap = Snapshot::new("predict");
    snap.put("ckpt", args.ckpt.display());
    snap.put("dataset", args.dataset.display());
    snap.put("instances", instances.len());
    snap.write_beside(&args.out)
}

// ---------------------------------------------------------------------------
// baseline

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BaselineKind {
    Majority,
    Random,
    Bow,
    Mesh,
}

#[derive(Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    kind: BaselineKind,
    /// Training instances (JSONL).
    #[arg(long)]
    train: PathBuf,
    /// Test instances (JSONL).
    #[arg(long)]
    test: PathBuf,
    /// Prediction CSV output (expected-metrics JSON for --kind random).
    #[arg(long)]
    out: PathBuf,
    /// Term index TSV (required for --kind mesh).
    #[arg(long)]
    mesh_index: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    l2: f64,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    lr: f64,
    #[arg(long, default_value_t = DEFAULT_NO_MATCH_PENALTY)]
    penalty: u32,
}

fn one_hot_probs(label: ResultLabel) -> (f64, f64, f64) {
    match label {
        ResultLabel::Up => (1.0, 0.0, 0.0),
        ResultLabel::Nodiff => (0.0, 1.0, 0.0),
        ResultLabel::Down => (0.0, 0.0, 1.0),
    }
}

pub fn run_baseline(args: BaselineArgs) -> Result<()> {
    let train: Vec<FinetuneInstance> = read_jsonl(&args.train)?;
    let test: Vec<FinetuneInstance> = read_jsonl(&args.test)?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid("baseline", "empty train or test set"));
    }

    let mut snap = Snapshot::new("baseline");
    snap.put("train", args.train.display());
    snap.put("test", args.test.display());

    let preds: Vec<(ResultLabel, (f64, f64, f64))> = match args.kind {
        BaselineKind::Majority => {
            snap.put("kind", "majority");
            let train_labels: Vec<ResultLabel> = train.iter().map(|i| i.result).collect();
            let test_labels: Vec<ResultLabel> = test.iter().map(|i| i.result).collect();
            let (majority, _) = majority_baseline(&train_labels, &test_labels)?;
            test.iter().map(|_| (majority, one_hot_probs(majority))).collect()
        }
        BaselineKind::Random => {
            snap.put("kind", "random");
            let counts: [f64; 3] = {
                let mut c = [0.0; 3];
                for inst in &test {
                    c[inst.result.index()] += 1.0;
                }
                let n = test.len() as f64;
                [c[0] / n, c[1] / n, c[2] / n]
            };
            let metrics = random_baseline_expected(&counts)?;
            let json = serde_json::to_string_pretty(&metrics)
                .map_err(|e| Error::invalid("metrics", e.to_string()))?;
            std::fs::write(&args.out, json.as_bytes()).map_err(|e| Error::io(&args.out, e))?;
            eprintln!(
                "baseline: expected random accuracy {:.4}, 3-way F1 {:.4}",
                metrics.accuracy, metrics.macro_f1_3way
            );
            return snap.write_beside(&args.out);
        }
        BaselineKind::Bow => {
            snap.put("kind", "bow");
            snap.put("l2", args.l2);
            snap.put("epochs", args.epochs);
            snap.put("lr", args.lr);
            let table = IdfTable::fit(&train);
            let features: Vec<_> = train.iter().map(|i| bow_features(i, &table)).collect();
            let labels: Vec<usize> = train.iter().map(|i| i.result.index()).collect();
            let cfg = LogisticConfig {
                l2: args.l2,
                epochs: args.epochs,
                learning_rate: args.lr,
                seed: 0,
            };
            let weights = train_logistic(&features, &labels, table.dim, &cfg)?;
            test.iter()
                .map(|inst| {
                    let p = predict_logistic(&weights, &bow_features(inst, &table));
                    let pred = (0..3)
                        .max_by(|&a, &b| p[a].partial_cmp(&p[b]).expect("finite"))
                        .unwrap();
                    (
                        ResultLabel::from_index(pred).unwrap(),
                        (p[0], p[1], p[2]),
                    )
                })
                .collect()
        }
        BaselineKind::Mesh => {
            snap.put("kind", "mesh");
            snap.put("penalty", args.penalty);
            let index_path = args.mesh_index.as_ref().ok_or_else(|| {
                Error::invalid("baseline", "--mesh-index is required for --kind mesh")
            })?;
            let content =
                std::fs::read_to_string(index_path).map_err(|e| Error::io(index_path, e))?;
            let index = MeshIndex::from_tsv(&content)?;
            let clf = MeshClassifier::fit(index, &train, args.penalty)?;
            let mut fallbacks = 0usize;
            let preds: Vec<_> = test
                .iter()
                .map(|inst| {
                    let p = clf.predict(inst);
                    if p.fallback {
                        fallbacks += 1;
                    }
                    (p.label, one_hot_probs(p.label))
                })
                .collect();
            if fallbacks > 0 {
                eprintln!("baseline: {fallbacks} test instances fell back to the majority class");
            }
            preds
        }
    };

    let records: Vec<PredictionRecord> = test
        .iter()
        .zip(&preds)
        .enumerate()
        .map(|(i, (inst, (pred, (p_up, p_nodiff, p_down))))| PredictionRecord {
            id: format!("{i:06}"),
            gold: inst.result,
            pred: *pred,
            p_up: *p_up,
            p_nodiff: *p_nodiff,
            p_down: *p_down,
        })
        .collect();
    write_prediction_csv(&args.out, &records)?;
    eprintln!("baseline: wrote {} predictions to {}", records.len(), args.out.display());
    snap.write_beside(&args.out)
}

// ---------------------------------------------------------------------------
// eval

#[derive(Args)]
pub struct EvalArgs {
    /// System predictions as NAME:standard.csv[:adversarial.csv]
    /// (repeatable).
    #[arg(long = "pred", required = true)]
    preds: Vec<String>,
    /// Markdown report output.
    #[arg(long)]
    out: PathBuf,
    /// Machine-readable report (default: <out>.json).
    #[arg(long)]
    json_out: Option<PathBuf>,
}

pub fn run_eval(args: EvalArgs) -> Result<()> {
    let mut entries = Vec::new();
    for spec in &args.preds {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() < 2 || parts.len() > 3 || parts[0].is_empty() {
            return Err(Error::invalid(
                "eval",
                format!("bad --pred {spec:?}; expected NAME:standard.csv[:adversarial.csv]"),
            ));
        }
        entries.push(SystemEntry {
            name: parts[0].to_string(),
            standard: Some(PathBuf::from(parts[1])),
            adversarial: parts.get(2).map(PathBuf::from),
        });
    }
    let report = evaluation_report(&entries);
    let markdown = report_markdown(&report);
    std::fs::write(&args.out, markdown.as_bytes()).map_err(|e| Error::io(&args.out, e))?;
    let json_out = args
        .json_out
        .clone()
        .unwrap_or_else(|| suffixed(&args.out, ".json"));
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::invalid("report", e.to_string()))?;
    std::fs::write(&json_out, json.as_bytes()).map_err(|e| Error::io(&json_out, e))?;
    eprintln!(
        "eval: {} systems, {} missing inputs, report at {}",
        report.systems.len(),
        report.missing.len(),
        args.out.display()
    );

    let mut snap = Snapshot::new("eval");
    for (i, spec) in args.preds.iter().enumerate() {
        snap.put(&format!("pred_{i}"), spec);
    }
    snap.write_beside(&args.out)
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}
