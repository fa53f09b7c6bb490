//! `litrag`: run every pipeline stage from the command line.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 when a
//! pipeline stage fails. With `--json`, results and errors are printed to
//! stdout as a single JSON document.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use litrag_core::testset::Scope;
use litrag_core::workspace::ProviderKind;
use litrag_core::{DocId, RetrievalMode};

use crate::config::{CliConfig, Overrides};
use crate::error::{EXIT_OK, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(
    name = "litrag",
    version,
    about = "Hybrid retrieval-augmented QA over scientific literature"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Configuration file (default: ./litrag.toml when present).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    corpus_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    index_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    state_dir: Option<PathBuf>,
    /// Provider backend: openai or mock.
    #[arg(long, global = true)]
    provider: Option<ProviderKind>,
    /// Print results and errors as one JSON document on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and chunk every .txt file of a directory into the index directory.
    Ingest {
        /// Corpus directory (default: corpus_dir from the configuration).
        dir: Option<PathBuf>,
        /// Replace an existing corpus with different content and drop its indexes.
        #[arg(long)]
        force: bool,
    },
    /// Build or inspect indexes.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Answer one question.
    Query {
        query: String,
        #[arg(long, default_value = "hybrid")]
        mode: RetrievalMode,
        /// Restrict retrieval to one document.
        #[arg(long)]
        doc: Option<DocId>,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Generate, filter and assess QA test sets.
    #[command(subcommand)]
    Testset(TestsetCommand),
    /// Evaluate retrieval modes against a filtered test set.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Start the HTTP service.
    Serve {
        /// Listen address, e.g. 127.0.0.1:8080.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Inspect the resolved configuration.
    #[command(subcommand)]
    Config(ConfigCommand),
}

#[derive(Debug, Subcommand)]
enum IndexCommand {
    /// Build the vector and/or graph index from the ingested corpus.
    Build {
        /// Comma-separated: vector, graph, hybrid (both).
        #[arg(long, value_delimiter = ',', default_value = "vector,graph")]
        modes: Vec<String>,
        /// Overwrite indexes that already exist.
        #[arg(long)]
        force: bool,
    },
    /// Show what the index directory holds.
    Status,
}

#[derive(Debug, Subcommand)]
enum TestsetCommand {
    /// Generate synthetic question-answer pairs.
    Generate {
        #[arg(long)]
        scope: Scope,
        #[arg(short = 'n', long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        /// Source document for single-paper sets.
        #[arg(long)]
        doc: Option<DocId>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Overwrite an existing output file.
        #[arg(long)]
        force: bool,
    },
    /// Keep only items whose annotations are all yes.
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize annotation sheets as a quality table.
    Quality {
        /// Annotation CSV; repeat for several test sets.
        #[arg(long, required = true)]
        annotations: Vec<PathBuf>,
        /// Row label per sheet (default: file stem).
        #[arg(long)]
        label: Vec<String>,
    },
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Answer and score every test item in each mode.
    Run {
        #[arg(long)]
        testset: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "vector,graph,hybrid")]
        modes: Vec<RetrievalMode>,
        /// Output directory (default: <state_dir>/eval/<run_id>).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        run_id: Option<String>,
        /// Overwrite an existing report.
        #[arg(long)]
        force: bool,
    },
    /// Render saved reports as one markdown document.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum ConfigCommand {
    /// Print the resolved configuration (the API key is never shown).
    Show,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let json = cli.global.json;
    init_logging(cli.global.verbose);
    let overrides = Overrides {
        corpus_dir: cli.global.corpus_dir.clone(),
        index_dir: cli.global.index_dir.clone(),
        state_dir: cli.global.state_dir.clone(),
        provider: cli.global.provider,
    };
    let config = CliConfig::resolve(
        cli.global.config.as_deref(),
        |k| std::env::var(k).ok(),
        &overrides,
    );
    let redact = {
        let key = config
            .as_ref()
            .map(|c| c.provider.config.api_key.clone())
            .unwrap_or_default();
        move |s: &str| key.redact(s)
    };
    let result = config.and_then(|config| commands::run(cli.command, &config, json));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = e.body(&redact);
            eprintln!("error: {}", body.error);
            if json {
                println!("{}", serde_json::json!({ "error": body }));
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn init_logging(verbose: bool) {
    let level = if verbose {
        tracing_subscriber::filter::LevelFilter::INFO
    } else {
        tracing_subscriber::filter::LevelFilter::WARN
    };
    let _ = tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .try_init();
}
