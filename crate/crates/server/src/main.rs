use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use relqa_core::analysis::Analyzer;
use relqa_core::config::{load_or_create_config, PipelineConfig, ProviderKind};
use relqa_core::eval::{emit_report, read_dataset, run_eval, standard_configurations, EvalConfiguration, ExpansionStrategy};
use relqa_core::index::{read_corpus_jsonl, Index, IndexError};
use relqa_core::pipeline::Pipeline;
use relqa_server::{router, AppState};

#[derive(Parser)]
#[command(name = "relqa", version, about = "Extractive question answering over a document collection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the REST API (and static console assets)
    Serve {
        /// YAML configuration; a default file is written when none exists
        #[arg(long, env = "QA_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// 0 picks a free port
        #[arg(long, default_value_t = 8000)]
        port: u16,
        /// Directory served under /
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Build a persisted index from a JSON-lines corpus of {"id","title","body"}
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare expansion and RelSnip configurations on a labeled dataset
    Eval {
        #[arg(long, env = "QA_CONFIG")]
        config: Option<PathBuf>,
        /// JSON-lines {"question","answer","doc_id"}
        #[arg(long)]
        dataset: PathBuf,
        /// CSV output; a text table is written alongside
        #[arg(long)]
        report: PathBuf,
        /// Index to evaluate against instead of the configured one
        #[arg(long)]
        index: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> anyhow::Result<PipelineConfig> {
    let cwd = std::env::current_dir()?;
    let (mut config, source) = load_or_create_config(path, &cwd)?;
    if source.created {
        println!("wrote default configuration to {}", source.path.display());
    }
    let base = source.path.parent().map(Path::to_path_buf).unwrap_or(cwd);
    config.resolve_paths(&base);
    Ok(config)
}

fn build_index(corpus: &Path, out: &Path) -> anyhow::Result<()> {
    let docs = read_corpus_jsonl(corpus).with_context(|| format!("reading {}", corpus.display()))?;
    let index = match Index::ingest(docs) {
        Ok(ix) => ix,
        Err(IndexError::EmptyCorpus) => anyhow::bail!("EmptyCorpus: {} contains no documents", corpus.display()),
        Err(e) => return Err(e.into()),
    };
    index.persist(out).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "indexed {} documents ({} terms) into {}",
        index.len(),
        index.vocabulary().count(),
        out.display()
    );
    Ok(())
}

async fn serve(config: Option<PathBuf>, host: String, port: u16, static_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let config = load_config(config.as_deref())?;
    let pipeline = Pipeline::from_config(&config, Analyzer::english())?;
    let state = Arc::new(AppState { pipeline, config });
    let app = router(state, static_dir);
    let listener = tokio::net::TcpListener::bind((host.as_str(), port))
        .await
        .with_context(|| format!("binding {host}:{port}"))?;
    let addr = listener.local_addr()?;
    println!("listening on http://{addr}");
    std::io::stdout().flush()?;
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn eval(config: Option<PathBuf>, dataset: &Path, report: &Path, index: Option<PathBuf>) -> anyhow::Result<()> {
    let mut config = load_config(config.as_deref())?;
    if let Some(ix) = index {
        config.retriever.index_path = ix;
    }
    anyhow::ensure!(
        config.retriever.index_path.exists(),
        "index {} not found",
        config.retriever.index_path.display()
    );
    let examples = read_dataset(dataset)?;
    let pipeline = Pipeline::from_config(&config, Analyzer::english())?;
    let p = &config.expander.provider;
    let remote = match (p.kind, &p.endpoint) {
        (ProviderKind::Remote, Some(endpoint)) => Some((endpoint.as_str(), p.timeout_ms)),
        _ => None,
    };
    let mut configurations = standard_configurations(remote);
    for slot in [ExpansionStrategy::Word2Vec, ExpansionStrategy::Rm3] {
        configurations.push(EvalConfiguration {
            expansion: slot,
            relsnip: false,
        });
    }
    let result = run_eval(&pipeline, &examples, &configurations)?;
    let table = emit_report(&result, report)?;
    print!("{}", relqa_core::eval::render_table(&result));
    println!("wrote {} and {}", report.display(), table.display());
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "relqa=info,relqa_core=info".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve {
            config,
            host,
            port,
            static_dir,
        } => tokio::runtime::Runtime::new()
            .context("starting runtime")
            .and_then(|rt| rt.block_on(serve(config, host, port, static_dir))),
        Command::Index { corpus, out } => build_index(&corpus, &out),
        Command::Eval {
            config,
            dataset,
            report,
            index,
        } => eval(config, &dataset, &report, index),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
