//! Command-line front end: each pipeline stage is a subcommand sharing one
//! JSON config file and one seed. Every run writes a provenance manifest
//! beside its outputs; all outputs are byte-identical across reruns and
//! thread counts.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use finprep::chunker::{chunk_corpus, Chunk};
use finprep::config::PipelineConfig;
use finprep::corpus::{
    classify_language, read_documents, write_documents_to_path, write_error_report, Document,
    LanguageConfig,
};
use finprep::datasets::{
    build_paragraphs, sample_topic_pool, stratified_split, LabeledExample, Paragraph,
};
use finprep::manifest::RunManifest;
use finprep::metrics::{
    accuracy, confusion_counts, exact_match, f1_macro, f1_micro, token_f1, Labeling,
};
use finprep::mlm::{build_dataset, write_records, RecipeVariant};
use finprep::qagen::{
    generate, GenConfig, HttpLlmClient, LlmClient, QaContextInput, ReplayClient, SquadDataset,
};
use finprep::retrieval::{evaluate_curve, EmbeddingSet, RetrievalQuery};
use finprep::segmenter::{segment_sentences, Abbreviations};
use finprep::stats::{aggregate_corpus, truncation_report};
use finprep::wordpiece::VocabTable;

#[derive(Parser)]
#[command(name = "finprep", version, about = "German financial corpus preparation and evaluation")]
struct Cli {
    /// JSON config file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; never changes outputs, only wall time.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct InOut {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Read a JSONL corpus, keep German documents, report bad records.
    Ingest {
        #[command(flatten)]
        io: InOut,
        /// Where malformed-record reports go (JSONL).
        #[arg(long)]
        errors: Option<PathBuf>,
    },
    /// Corpus overview and truncation report (JSON).
    Stats {
        #[command(flatten)]
        io: InOut,
        /// Sequence limit for the truncation report.
        #[arg(long, default_value_t = 512)]
        limit: u64,
    },
    /// Split documents into sentence-aligned chunks (JSONL).
    Chunk {
        #[command(flatten)]
        io: InOut,
        /// Where the chunking report goes (JSON).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Build a masked-LM dataset (binary records) from chunks.
    Mlm {
        #[command(flatten)]
        io: InOut,
        /// Training recipe variant: scratch | further.
        #[arg(long, default_value = "scratch")]
        variant: String,
    },
    /// Stratified train/validation/test split of labeled examples.
    Split {
        #[arg(long)]
        input: PathBuf,
        /// Directory receiving train/val/test JSONL plus a report.
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Group announcement sentences into 3-sentence paragraphs.
    Paragraphs {
        #[command(flatten)]
        io: InOut,
    },
    /// Sample a fixed-size per-topic paragraph pool.
    Pool {
        #[command(flatten)]
        io: InOut,
        /// Comma-separated topics; defaults to all labels in the input.
        #[arg(long)]
        topics: Option<String>,
    },
    /// Rank a pool against queries and write the mean-nDCG curve CSV.
    Retrieve {
        /// Paragraph pool (JSONL).
        #[arg(long)]
        input: PathBuf,
        /// Queries (JSONL: id, topic, text).
        #[arg(long)]
        queries: Option<PathBuf>,
        /// Embedding file (dim= header).
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Classification or QA evaluation.
    Metrics {
        /// Task: classification | qa
        #[arg(long)]
        task: String,
        /// Predictions (JSONL).
        #[arg(long)]
        pred: PathBuf,
        /// Gold labels (JSONL) or SQuAD JSON for qa.
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Generate an extractive QA dataset via the configured LLM client.
    Qagen {
        #[command(flatten)]
        io: InOut,
        /// Where the generation report goes (JSON).
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

enum AppError {
    /// Bad configuration or malformed input: exit 1.
    Validation(String),
    /// Environment failure (I/O, transport): exit 2.
    Runtime(String),
}

impl AppError {
    fn validation(e: impl std::fmt::Display) -> Self {
        AppError::Validation(e.to_string())
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        AppError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own usage text; --help/--version are success.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(AppError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(AppError::runtime)?;
    }
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path).map_err(AppError::validation)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
        config.chunker.seed = seed;
        config.masking.seed = seed;
    }
    let config_json = serde_json::to_string(&config).expect("config serializes");

    match cli.command {
        Command::Ingest { io, errors } => cmd_ingest(&config, &config_json, &io, errors),
        Command::Stats { io, limit } => cmd_stats(&config, &config_json, &io, limit),
        Command::Chunk { io, report } => cmd_chunk(&config, &config_json, &io, report),
        Command::Mlm { io, variant } => cmd_mlm(&config, &config_json, &io, &variant),
        Command::Split { input, output_dir } => {
            cmd_split(&config, &config_json, &input, &output_dir)
        }
        Command::Paragraphs { io } => cmd_paragraphs(&config, &config_json, &io),
        Command::Pool { io, topics } => cmd_pool(&config, &config_json, &io, topics),
        Command::Retrieve {
            input,
            queries,
            embeddings,
            output,
        } => cmd_retrieve(&config, &config_json, &input, queries, embeddings, &output),
        Command::Metrics {
            task,
            pred,
            gold,
            output,
        } => cmd_metrics(&config, &config_json, &task, &pred, &gold, &output),
        Command::Qagen { io, report } => cmd_qagen(&config, &config_json, &io, report),
    }
}

fn output_dir(output: &Path) -> &Path {
    match output.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

fn write_manifest(
    command: &str,
    config: &PipelineConfig,
    config_json: &str,
    inputs: &[&Path],
    dir: &Path,
) -> Result<(), AppError> {
    let mut manifest = RunManifest::new(command, config.seed, config_json);
    for input in inputs {
        manifest.add_input(input).map_err(AppError::runtime)?;
    }
    manifest.write(dir).map_err(AppError::runtime)
}

fn load_vocab(config: &PipelineConfig) -> Result<VocabTable, AppError> {
    let path = config
        .vocab
        .as_ref()
        .ok_or_else(|| AppError::Validation("config must set \"vocab\" for this command".into()))?;
    VocabTable::load(path).map_err(AppError::validation)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, AppError> {
    let file = std::fs::File::open(path)
        .map_err(|e| AppError::Runtime(format!("cannot open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(AppError::runtime)?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| {
            AppError::Validation(format!("{}:{}: {e}", path.display(), i + 1))
        })?;
        out.push(item);
    }
    Ok(out)
}

fn write_jsonl<T: serde::Serialize>(items: &[T], path: &Path) -> Result<(), AppError> {
    let file = std::fs::File::create(path)
        .map_err(|e| AppError::Runtime(format!("cannot create {}: {e}", path.display())))?;
    let mut writer = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut writer, item).map_err(AppError::runtime)?;
        writer.write_all(b"\n").map_err(AppError::runtime)?;
    }
    writer.flush().map_err(AppError::runtime)
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<(), AppError> {
    let json = serde_json::to_string_pretty(value).map_err(AppError::runtime)?;
    std::fs::write(path, json + "\n")
        .map_err(|e| AppError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn cmd_ingest(
    config: &PipelineConfig,
    config_json: &str,
    io: &InOut,
    errors_path: Option<PathBuf>,
) -> Result<(), AppError> {
    let (docs, errors) = read_documents(&io.input).map_err(AppError::runtime)?;
    let language = LanguageConfig::shipped();
    let kept: Vec<&Document> = docs
        .iter()
        .filter(|d| classify_language(&d.text, &language).keep)
        .collect();
    let kept_count = kept.len();
    write_documents_to_path(kept.into_iter().collect::<Vec<_>>(), &io.output)
        .map_err(AppError::runtime)?;
    if let Some(path) = &errors_path {
        let file = std::fs::File::create(path).map_err(AppError::runtime)?;
        write_error_report(&errors, BufWriter::new(file)).map_err(AppError::runtime)?;
    }
    write_manifest("ingest", config, config_json, &[&io.input], output_dir(&io.output))?;
    println!(
        "ingest: {} read, {} kept, {} filtered, {} malformed",
        docs.len(),
        kept_count,
        docs.len() - kept_count,
        errors.len()
    );
    Ok(())
}

fn cmd_stats(
    config: &PipelineConfig,
    config_json: &str,
    io: &InOut,
    limit: u64,
) -> Result<(), AppError> {
    let vocab = load_vocab(config)?;
    let abbrev = Abbreviations::shipped();
    let (docs, errors) = read_documents(&io.input).map_err(AppError::runtime)?;
    if !errors.is_empty() {
        return Err(AppError::Validation(format!(
            "{} malformed records in {} (first: line {}: {})",
            errors.len(),
            io.input.display(),
            errors[0].line,
            errors[0].reason
        )));
    }
    let acc = aggregate_corpus(&docs, &vocab, &abbrev);
    let truncation = truncation_report(acc.token_counts().iter().map(|&c| c as u64), limit);
    let stats = acc.finalize();
    println!("{}", stats.render_table());
    let report = serde_json::json!({ "stats": stats, "truncation": truncation });
    write_json(&report, &io.output)?;
    write_manifest("stats", config, config_json, &[&io.input], output_dir(&io.output))
}

fn cmd_chunk(
    config: &PipelineConfig,
    config_json: &str,
    io: &InOut,
    report_path: Option<PathBuf>,
) -> Result<(), AppError> {
    let vocab = load_vocab(config)?;
    let abbrev = Abbreviations::shipped();
    let (docs, errors) = read_documents(&io.input).map_err(AppError::runtime)?;
    if !errors.is_empty() {
        return Err(AppError::Validation(format!(
            "{} malformed records in {}",
            errors.len(),
            io.input.display()
        )));
    }
    let (chunks, report) = chunk_corpus(&docs, &vocab, &abbrev, &config.chunker);
    write_jsonl(&chunks, &io.output)?;
    if let Some(path) = &report_path {
        write_json(&report, path)?;
    }
    write_manifest("chunk", config, config_json, &[&io.input], output_dir(&io.output))?;
    println!(
        "chunk: {} documents -> {} chunks ({} discarded)",
        report.docs_in, report.chunks_out, report.chunks_discarded
    );
    Ok(())
}

fn cmd_mlm(
    config: &PipelineConfig,
    config_json: &str,
    io: &InOut,
    variant: &str,
) -> Result<(), AppError> {
    let variant = match variant {
        "scratch" => RecipeVariant::Scratch,
        "further" => RecipeVariant::Further,
        other => {
            return Err(AppError::Validation(format!(
                "unknown variant {other:?}; use scratch or further"
            )))
        }
    };
    let vocab = load_vocab(config)?;
    let chunks: Vec<Chunk> = read_jsonl(&io.input)?;
    let (examples, manifest) =
        build_dataset(&chunks, &vocab, &config.masking, variant).map_err(AppError::validation)?;
    let file = std::fs::File::create(&io.output).map_err(AppError::runtime)?;
    write_records(&examples, BufWriter::new(file)).map_err(AppError::runtime)?;
    let manifest_path = io.output.with_extension("manifest.json");
    write_json(&manifest, &manifest_path)?;
    write_manifest("mlm", config, config_json, &[&io.input], output_dir(&io.output))?;
    println!(
        "mlm: {} examples written ({} without maskable tokens)",
        manifest.examples, manifest.no_maskable_examples
    );
    Ok(())
}

fn cmd_split(
    config: &PipelineConfig,
    config_json: &str,
    input: &Path,
    dir: &Path,
) -> Result<(), AppError> {
    let examples: Vec<LabeledExample> = read_jsonl(input)?;
    let fractions = (config.split.train, config.split.validation, config.split.test);
    let split =
        stratified_split(&examples, fractions, config.seed).map_err(AppError::validation)?;
    std::fs::create_dir_all(dir).map_err(AppError::runtime)?;
    write_jsonl(&split.train, &dir.join("train.jsonl"))?;
    write_jsonl(&split.val, &dir.join("val.jsonl"))?;
    write_jsonl(&split.test, &dir.join("test.jsonl"))?;
    let report = serde_json::json!({
        "sizes": [split.train.len(), split.val.len(), split.test.len()],
        "label_counts": split.label_counts(),
        "warnings": split.warnings,
    });
    write_json(&report, &dir.join("split_report.json"))?;
    write_manifest("split", config, config_json, &[input], dir)?;
    println!(
        "split: {}/{}/{} examples",
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    Ok(())
}

fn cmd_paragraphs(
    config: &PipelineConfig,
    config_json: &str,
    io: &InOut,
) -> Result<(), AppError> {
    let abbrev = Abbreviations::shipped();
    let (docs, errors) = read_documents(&io.input).map_err(AppError::runtime)?;
    if !errors.is_empty() {
        return Err(AppError::Validation(format!(
            "{} malformed records in {}",
            errors.len(),
            io.input.display()
        )));
    }
    let mut paragraphs: Vec<Paragraph> = Vec::new();
    for doc in &docs {
        let labels: BTreeSet<String> =
            doc.labels.iter().flatten().cloned().collect();
        let sentences: Vec<(String, BTreeSet<String>)> = segment_sentences(&doc.text, &abbrev)
            .iter()
            .map(|span| {
                let chars: Vec<char> = doc.text.chars().collect();
                (span.slice(&chars), labels.clone())
            })
            .collect();
        paragraphs.extend(build_paragraphs(&doc.id, &sentences));
    }
    write_jsonl(&paragraphs, &io.output)?;
    write_manifest(
        "paragraphs",
        config,
        config_json,
        &[&io.input],
        output_dir(&io.output),
    )?;
    println!("paragraphs: {} documents -> {} paragraphs", docs.len(), paragraphs.len());
    Ok(())
}

fn cmd_pool(
    config: &PipelineConfig,
    config_json: &str,
    io: &InOut,
    topics: Option<String>,
) -> Result<(), AppError> {
    let paragraphs: Vec<Paragraph> = read_jsonl(&io.input)?;
    let topics: Vec<String> = match topics {
        Some(t) => t.split(',').map(|s| s.trim().to_string()).collect(),
        None => {
            let all: BTreeSet<String> = paragraphs
                .iter()
                .flat_map(|p| p.labels.iter().cloned())
                .collect();
            all.into_iter().collect()
        }
    };
    let (pool, warnings) = sample_topic_pool(
        &paragraphs,
        config.retrieval.pool_per_topic,
        &topics,
        config.seed,
    );
    write_jsonl(&pool, &io.output)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    write_manifest("pool", config, config_json, &[&io.input], output_dir(&io.output))?;
    println!("pool: {} paragraphs over {} topics", pool.len(), topics.len());
    Ok(())
}

fn cmd_retrieve(
    config: &PipelineConfig,
    config_json: &str,
    input: &Path,
    queries: Option<PathBuf>,
    embeddings: Option<PathBuf>,
    output: &Path,
) -> Result<(), AppError> {
    let queries_path = queries
        .or_else(|| config.retrieval.queries.clone())
        .ok_or_else(|| AppError::Validation("no queries file given (flag or config)".into()))?;
    let embeddings_path = embeddings
        .or_else(|| config.retrieval.embeddings.clone())
        .ok_or_else(|| AppError::Validation("no embeddings file given (flag or config)".into()))?;
    let pool: Vec<Paragraph> = read_jsonl(input)?;
    let queries: Vec<RetrievalQuery> = read_jsonl(&queries_path)?;
    let embeddings = EmbeddingSet::read_path(&embeddings_path).map_err(AppError::validation)?;
    let curve = evaluate_curve(&queries, &pool, &embeddings, 1..=config.retrieval.k_max)
        .map_err(AppError::validation)?;
    std::fs::write(output, curve.to_csv())
        .map_err(|e| AppError::Runtime(format!("cannot write {}: {e}", output.display())))?;
    write_manifest(
        "retrieve",
        config,
        config_json,
        &[input, &queries_path, &embeddings_path],
        output_dir(output),
    )?;
    println!(
        "retrieve: {} queries against {} paragraphs ({} excluded)",
        curve.queries_total,
        pool.len(),
        curve.queries_excluded
    );
    Ok(())
}

/// A QA prediction: the answer text proposed for one question id.
#[derive(serde::Deserialize)]
struct QaPrediction {
    id: String,
    text: String,
}

fn cmd_metrics(
    config: &PipelineConfig,
    config_json: &str,
    task: &str,
    pred: &Path,
    gold: &Path,
    output: &Path,
) -> Result<(), AppError> {
    let report = match task {
        "classification" => {
            let mut preds: Vec<Labeling> = read_jsonl(pred)?;
            let mut golds: Vec<Labeling> = read_jsonl(gold)?;
            preds.sort_by(|a, b| a.id.cmp(&b.id));
            golds.sort_by(|a, b| a.id.cmp(&b.id));
            let label_set: BTreeSet<String> = golds
                .iter()
                .chain(&preds)
                .flat_map(|l| l.labels.iter().cloned())
                .collect();
            let counts =
                confusion_counts(&preds, &golds, &label_set).map_err(AppError::validation)?;
            serde_json::json!({
                "task": "classification",
                "examples": golds.len(),
                "macro_f1": f1_macro(&counts).map_err(AppError::validation)?,
                "micro_f1": f1_micro(&counts).map_err(AppError::validation)?,
                "accuracy": accuracy(&preds, &golds).map_err(AppError::validation)?,
            })
        }
        "qa" => {
            let preds: Vec<QaPrediction> = read_jsonl(pred)?;
            let raw = std::fs::read_to_string(gold).map_err(AppError::runtime)?;
            let dataset: SquadDataset =
                serde_json::from_str(&raw).map_err(AppError::validation)?;
            let by_id: std::collections::HashMap<&str, &str> = preds
                .iter()
                .map(|p| (p.id.as_str(), p.text.as_str()))
                .collect();
            let mut em_sum = 0.0;
            let mut f1_sum = 0.0;
            let mut n = 0usize;
            for (_, qa) in dataset.records() {
                let golds: Vec<String> =
                    qa.answers.iter().map(|a| a.text.clone()).collect();
                let prediction = by_id.get(qa.id.as_str()).copied().ok_or_else(|| {
                    AppError::Validation(format!("no prediction for question {}", qa.id))
                })?;
                em_sum += exact_match(prediction, &golds) as f64;
                f1_sum += token_f1(prediction, &golds);
                n += 1;
            }
            if n == 0 {
                return Err(AppError::Validation("gold dataset has no questions".into()));
            }
            serde_json::json!({
                "task": "qa",
                "questions": n,
                "exact_match": em_sum / n as f64,
                "token_f1": f1_sum / n as f64,
            })
        }
        other => {
            return Err(AppError::Validation(format!(
                "unknown task {other:?}; use classification or qa"
            )))
        }
    };
    write_json(&report, output)?;
    write_manifest("metrics", config, config_json, &[pred, gold], output_dir(output))
}

fn cmd_qagen(
    config: &PipelineConfig,
    config_json: &str,
    io: &InOut,
    report_path: Option<PathBuf>,
) -> Result<(), AppError> {
    let abbrev = Abbreviations::shipped();
    let (docs, errors) = read_documents(&io.input).map_err(AppError::runtime)?;
    if !errors.is_empty() {
        return Err(AppError::Validation(format!(
            "{} malformed records in {}",
            errors.len(),
            io.input.display()
        )));
    }
    let contexts: Vec<QaContextInput> = docs
        .iter()
        .map(|doc| {
            let chars: Vec<char> = doc.text.chars().collect();
            QaContextInput {
                id: doc.id.clone(),
                sentences: segment_sentences(&doc.text, &abbrev)
                    .iter()
                    .map(|span| span.slice(&chars))
                    .collect(),
            }
        })
        .collect();
    let client: Box<dyn LlmClient> = match &config.qagen.replay_fixture {
        Some(path) => Box::new(ReplayClient::read_path(path).map_err(AppError::validation)?),
        None => {
            if config.qagen.endpoint.is_empty() {
                return Err(AppError::Validation(
                    "qagen needs either a replay_fixture or an endpoint in the config".into(),
                ));
            }
            Box::new(
                HttpLlmClient::from_env(
                    &config.qagen.endpoint,
                    &config.qagen.model,
                    config.qagen.temperature,
                    &config.qagen.api_key_env,
                )
                .map_err(AppError::validation)?,
            )
        }
    };
    let gen_config = GenConfig {
        retries: config.qagen.retries,
        concurrency: config.qagen.concurrency,
        ..GenConfig::default()
    };
    let (dataset, report) = generate(&contexts, client.as_ref(), &gen_config);
    write_json(&dataset, &io.output)?;
    if let Some(path) = &report_path {
        write_json(&report, path)?;
    }
    write_manifest("qagen", config, config_json, &[&io.input], output_dir(&io.output))?;
    println!(
        "qagen: {} contexts -> {} records ({} answers discarded)",
        report.contexts_processed,
        dataset.len(),
        report.answers_discarded
    );
    Ok(())
}
