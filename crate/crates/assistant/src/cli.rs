//! Command-line entry point. Exit codes: 0 success, 1 usage error, 2 runtime
//! error.

use std::ffi::OsString;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use convsearch_core::metrics::trec::{format_run, parse_qrels};
use convsearch_core::backend::Unconfigured;
use convsearch_core::{AnalyzerConfig, Index, RewriterBackend, StemmerKind};

use crate::collection::CollectionFormat;
use crate::config::PipelineConfig;
use crate::gateway::{Capability, HttpBackend};
use crate::eval::{self, QueryMode, DEFAULT_SWEEP};
use crate::pipeline::Pipeline;
use crate::server::{self, AppState};
use crate::sessions::SessionStore;
use crate::store;
use crate::stub;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "convsearch", version, about = "Conversational search assistant")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Index management.
    Index {
        #[command(subcommand)]
        command: IndexCommand,
    },
    /// Run the HTTP session API.
    Serve(ServeArgs),
    /// Batch evaluation.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// Run the deterministic stand-in for the model backends.
    StubBackend {
        #[arg(long, default_value = "127.0.0.1:9000")]
        bind: SocketAddr,
    },
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    /// Build an index directory from a passage collection.
    Build {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "tsv_id_text")]
        format: CollectionFormat,
        #[arg(long)]
        out: PathBuf,
        /// Disable Porter stemming.
        #[arg(long)]
        no_stem: bool,
        /// Keep stopwords in the index.
        #[arg(long)]
        keep_stopwords: bool,
    },
}

#[derive(Debug, Args)]
pub struct IndexArg {
    /// Index directory; overrides `index_dir` from the config.
    #[arg(long)]
    pub index: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    #[command(flatten)]
    pub index: IndexArg,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Recall, P@3, MAP, MRR and nDCG@3 of a query mode.
    Retrieval {
        #[command(flatten)]
        index: IndexArg,
        #[arg(long)]
        topics: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long, value_enum, default_value = "rewritten")]
        mode: QueryMode,
        /// Re-rank the first-stage list.
        #[arg(long)]
        rerank: bool,
        /// TREC run file to write.
        #[arg(long)]
        run: Option<PathBuf>,
        /// Metric report (TSV) to write; printed to stdout otherwise.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value = "convsearch")]
        tag: String,
    },
    /// Corpus BLEU-4 of rewrites against human targets.
    Rewrites {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// ROUGE-L and METEOR of answers over a minimum-length sweep.
    Answers {
        #[command(flatten)]
        index: IndexArg,
        #[arg(long)]
        topics: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SWEEP)]
        sweep: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let config = PipelineConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Index {
            command:
                IndexCommand::Build {
                    input,
                    format,
                    out,
                    no_stem,
                    keep_stopwords,
                },
        } => {
            let mut analyzer = AnalyzerConfig::default();
            if no_stem {
                analyzer.stemmer = StemmerKind::None;
            }
            if keep_stopwords {
                analyzer.stopwords.clear();
            }
            let index = store::build_from_collection(&input, format, &out, analyzer)?;
            println!("indexed {} passages into {}", index.doc_count(), out.display());
            Ok(())
        }
        Command::Serve(args) => serve(config, args),
        Command::Eval { command } => run_eval(config, command),
        Command::StubBackend { bind } => {
            let rt = runtime()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(bind).await?;
                println!("stub backend on http://{}", listener.local_addr()?);
                axum::serve(listener, stub::stub_router())
                    .with_graceful_shutdown(shutdown_signal())
                    .await?;
                Ok(())
            })
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

async fn shutdown_signal() {
    let _ = tokio::signal::ctrl_c().await;
}

fn index_dir(config: &PipelineConfig, arg: &IndexArg) -> Result<PathBuf> {
    match arg.index.clone().or_else(|| config.index_dir.clone()) {
        Some(dir) => Ok(dir),
        None => bail!("no index directory: pass --index or set index_dir"),
    }
}

fn load_index(config: &PipelineConfig, arg: &IndexArg) -> Result<Index> {
    let dir = index_dir(config, arg)?;
    store::load(&dir).with_context(|| format!("loading index from {}", dir.display()))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn serve(config: PipelineConfig, args: ServeArgs) -> Result<()> {
    // A missing index still starts the service; turns then answer 503.
    let pipeline = match load_index(&config, &args.index) {
        Ok(index) => Some(Arc::new(Pipeline::new(Arc::new(index), config.clone()))),
        Err(e) => {
            eprintln!("warning: {e:#}");
            None
        }
    };
    let sessions = match &config.session_log {
        Some(path) => SessionStore::with_log(path)?,
        None => SessionStore::in_memory(),
    };
    let state = AppState {
        pipeline,
        sessions: Arc::new(sessions),
    };
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(args.bind).await?;
        println!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, server::router(state))
            .with_graceful_shutdown(shutdown_signal())
            .await?;
        Ok(())
    })
}

fn run_eval(config: PipelineConfig, command: EvalCommand) -> Result<()> {
    match command {
        EvalCommand::Retrieval {
            index,
            topics,
            qrels,
            mode,
            rerank,
            run,
            report,
            tag,
        } => {
            let index = load_index(&config, &index)?;
            let topics = eval::parse_topics(&read(&topics)?)?;
            let judgments = parse_qrels(&read(&qrels)?)?;
            let pipeline = Pipeline::new(Arc::new(index), config);
            let result = eval::eval_retrieval(&pipeline, &topics, &judgments, mode, rerank)?;
            if let Some(path) = run {
                fs::write(&path, format_run(&result.runs, &tag)).with_context(|| format!("writing {}", path.display()))?;
            }
            if result.rerank_degraded_turns > 0 {
                eprintln!("note: scorer fallback used on {} turns", result.rerank_degraded_turns);
            }
            write_or_print(report.as_deref(), &result.report.to_tsv())
        }
        EvalCommand::Rewrites { records, out } => {
            let records = eval::parse_rewrite_records(&read(&records)?)?;
            let backend: Box<dyn RewriterBackend> = match &config.backends.rewriter {
                Some(e) => Box::new(HttpBackend::new(e.endpoint(Capability::Rewrite))),
                None => Box::new(Unconfigured),
            };
            let result = eval::eval_rewrites(&records, &*backend, config.fallback.rewrite)?;
            if result.degraded > 0 {
                eprintln!("note: fallback rewriter used on {} records", result.degraded);
            }
            write_or_print(out.as_deref(), &result.to_tsv())
        }
        EvalCommand::Answers {
            index,
            topics,
            qrels,
            sweep,
            out,
        } => {
            let index = load_index(&config, &index)?;
            let topics = eval::parse_topics(&read(&topics)?)?;
            let judgments = parse_qrels(&read(&qrels)?)?;
            let pipeline = Pipeline::new(Arc::new(index), config);
            let table = eval::eval_answers(&pipeline, &topics, &judgments, &sweep)?;
            write_or_print(out.as_deref(), &table.to_tsv())
        }
    }
}
