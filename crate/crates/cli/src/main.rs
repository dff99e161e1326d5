//! `medkg`: runs the batch stages, queries the graph and serves the API.
//!
//! Exit codes: 0 on success, 1 when a stage fails or `validate` finds
//! violations, 2 for bad arguments or configuration.

use std::fs::File;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use medkg::pipeline::{Pipeline, PipelineConfig, PipelineError, Workspace};
use medkg::qa::{QaMode, QaRequest};
use medkg::review::{Action, DecisionRequest, ItemStatus, ReviewError};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "medkg", version, about = "Indicator knowledge-graph pipeline")]
struct Cli {
    /// Pipeline config (JSON). Relative paths inside it resolve against its directory.
    #[arg(long, short, global = true, default_value = "pipeline.json")]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    graph_file: Option<PathBuf>,
    #[arg(long, global = true)]
    retrieval_k: Option<usize>,
    #[arg(long, global = true)]
    prompt_budget: Option<usize>,
    #[arg(long, global = true)]
    template_id: Option<String>,
    #[arg(long, global = true)]
    bind: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Clean and chunk the corpus.
    Ingest,
    /// Embed chunks into the vector index.
    Index,
    /// Run extraction intents against the model provider.
    Extract {
        /// Run only this intent id.
        #[arg(long)]
        intent: Option<String>,
    },
    /// Fuse completed batches into the graph.
    Fuse,
    /// ingest, index, extract and fuse.
    Build,
    /// Check graph constraints; exits 1 on any violation.
    Validate,
    /// Canonical JSON Lines export.
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Stats,
    /// Answer a question from reviewed graph facts.
    Qa {
        question: String,
        #[arg(long, value_enum, default_value = "grounded")]
        mode: Mode,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        hop_limit: Option<usize>,
    },
    /// Serve the HTTP API until Ctrl-C.
    Serve,
    /// Work the review queue without the server.
    Review {
        #[command(subcommand)]
        command: ReviewCommand,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Grounded,
    Generative,
}

#[derive(Subcommand)]
enum ReviewCommand {
    List {
        /// pending, accepted, rejected or edited.
        #[arg(long)]
        status: Option<String>,
    },
    Next,
    Stats,
    Decide {
        item_id: String,
        #[arg(long, value_enum)]
        action: DecideAction,
        /// Version the decision was made against.
        #[arg(long)]
        version: u64,
        #[arg(long)]
        reviewer: String,
        #[arg(long, default_value = "")]
        note: String,
        /// Replacement triple as JSON, for `edit`.
        #[arg(long)]
        edited: Option<String>,
        /// Contender index, for conflict items.
        #[arg(long)]
        winner: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DecideAction {
    Accept,
    Reject,
    Edit,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure { code: e.exit_code() as u8, message: e.to_string() }
    }
}

impl From<ReviewError> for Failure {
    fn from(e: ReviewError) -> Self {
        let code = match e {
            ReviewError::Invalid(_) => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure { code: 1, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn print<T: Serialize>(value: &T) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Failure { code: 1, message: e.to_string() })?;
    writeln!(out)?;
    Ok(())
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let mut c = PipelineConfig::load(&cli.config)?;
    let o = &cli.overrides;
    if let Some(d) = &o.work_dir {
        c.work_dir = d.clone();
    }
    if let Some(g) = &o.graph_file {
        c.graph_file = Some(g.clone());
    }
    if let Some(k) = o.retrieval_k {
        c.retrieval_k = k;
    }
    if let Some(b) = o.prompt_budget {
        c.prompt_budget = b;
    }
    if let Some(t) = &o.template_id {
        c.template_id = t.clone();
    }
    if let Some(b) = &o.bind {
        c.bind = b.clone();
    }
    Ok(c)
}

/// Runs `f` and saves the run manifest whether or not it succeeded.
fn with_pipeline<T>(config: PipelineConfig, f: impl FnOnce(&mut Pipeline) -> Result<T, Failure>) -> Result<T, Failure> {
    let mut p = Pipeline::new(config)?;
    let result = f(&mut p);
    let saved = p.finish();
    let value = result?;
    saved?;
    Ok(value)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Ingest => with_pipeline(config, |p| print(&p.ingest()?)),
        Command::Index => with_pipeline(config, |p| print(&p.index()?)),
        Command::Extract { intent } => with_pipeline(config, |p| print(&p.extract(intent.as_deref())?)),
        Command::Fuse => with_pipeline(config, |p| print(&p.fuse()?)),
        Command::Build => with_pipeline(config, |p| print(&p.build()?)),
        Command::Validate => with_pipeline(config, |p| {
            let violations = p.validate_graph()?;
            print(&violations)?;
            match violations.len() {
                0 => Ok(()),
                n => Err(Failure { code: 1, message: format!("{n} constraint violation(s)") }),
            }
        }),
        Command::Export { out } => with_pipeline(config, |p| {
            let n = match out {
                Some(path) => p.export(&mut File::create(&path)?)?,
                None => p.export(&mut io::stdout().lock())?,
            };
            eprintln!("exported {n} records");
            Ok(())
        }),
        Command::Stats => with_pipeline(config, |p| print(&p.stats()?)),
        Command::Qa { question, mode, k, hop_limit } => with_pipeline(config, |p| {
            let mode = match mode {
                Mode::Grounded => QaMode::Grounded,
                Mode::Generative => QaMode::Generative,
            };
            print(&p.ask(&QaRequest { text: question, mode, k, hop_limit })?)
        }),
        Command::Serve => serve(config),
        Command::Review { command } => review(config, command),
    }
}

fn serve(config: PipelineConfig) -> Result<(), Failure> {
    config.validate()?;
    let addr: SocketAddr = config.bind.parse().map_err(|_| usage(format!("bad bind address {:?}", config.bind)))?;
    let token = std::env::var(&config.api_token_env).ok();
    if token.as_deref().is_none_or(str::is_empty) {
        eprintln!("warning: ${} is unset; the API is open to anyone who can reach {addr}", config.api_token_env);
    }
    let ws = Workspace::open(config)?;
    let state = medkg_server::AppState::from_workspace(&ws, token)?;
    let runtime = tokio::runtime::Runtime::new()?;
    eprintln!("listening on http://{addr}");
    runtime.block_on(medkg_server::serve(state, addr))?;
    Ok(())
}

fn review(config: PipelineConfig, command: ReviewCommand) -> Result<(), Failure> {
    config.validate()?;
    let ws = Workspace::open(config)?;
    let service = ws.review_service()?;
    match command {
        ReviewCommand::List { status } => {
            let status = match status.as_deref() {
                None => None,
                Some(s) => Some(ItemStatus::parse(s).ok_or_else(|| usage(format!("unknown status {s:?}")))?),
            };
            print(&service.items(status))
        }
        ReviewCommand::Next => match service.next() {
            Some(item) => print(&item),
            None => print(&serde_json::Value::Null),
        },
        ReviewCommand::Stats => print(&service.stats()),
        ReviewCommand::Decide { item_id, action, version, reviewer, note, edited, winner } => {
            let edited_triple = match edited {
                Some(text) => Some(serde_json::from_str(&text).map_err(|e| usage(format!("--edited: {e}")))?),
                None => None,
            };
            let action = match action {
                DecideAction::Accept => Action::Accept,
                DecideAction::Reject => Action::Reject,
                DecideAction::Edit => Action::Edit,
            };
            let req = DecisionRequest { action, edited_triple, winner, reviewer_id: reviewer, note, expected_version: version };
            let item = service.submit_decision(&item_id, req)?;
            ws.store.checkpoint().map_err(|e| Failure { code: 1, message: e.to_string() })?;
            print(&item)
        }
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
