//! `atb`: train, evaluate and replay agents without the web UI, or run the
//! service for it.
//!
//! Exit status is 0 when every requested check passes, 1 when a check
//! fails, and 2 for usage, input or I/O errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use atb_core::evalsim::{self, generate, generate_biased, train, HarnessError};
use atb_core::session::replay;
use atb_core::{
    Bias, CorrectnessReport, Domain, KnowledgeBase, LabelMode, LayoutTree, ProblemSpec,
    ScriptedTeacher, StopRule, TrainingReport, Transcript,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(
    name = "atb",
    version,
    about = "Train and evaluate tutor agents from the command line"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an agent with the scripted teacher.
    Train(TrainArgs),
    /// Score an agent on generated problems.
    Evaluate(EvaluateArgs),
    /// Rebuild an agent from a transcript.
    Replay(ReplayArgs),
    /// Run the HTTP service.
    DemoServer(ServerArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ReportFormat {
    Text,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BiasArg {
    NumeratorOne,
}

impl From<BiasArg> for Bias {
    fn from(b: BiasArg) -> Bias {
        match b {
            BiasArg::NumeratorOne => Bias::NumeratorOne,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Labels {
    /// Accept the default label offered for each step.
    Default,
    /// Name steps after what they do.
    Canonical,
}

#[derive(Debug, Args)]
struct ProblemArgs {
    /// fraction-add-same-denom, fraction-multiply, fraction-arithmetic or square-25.
    #[arg(long, value_parser = parse_domain)]
    domain: Domain,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Only draw problems with this property (multiplication problems).
    #[arg(long, value_enum)]
    bias: Option<BiasArg>,
    /// Tutor layout document; the domain's standard layout when absent.
    #[arg(long)]
    layout_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    report: ReportFormat,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: ProblemArgs,
    /// Number of training problems to generate.
    #[arg(long, default_value_t = 20)]
    problems: usize,
    /// Stop after this many consecutive problems solved without help; 0
    /// trains on every problem. Not reaching it fails the run.
    #[arg(long, default_value_t = 2)]
    stop_after: usize,
    #[arg(long, value_enum, default_value_t = Labels::Default)]
    labels: Labels,
    /// Agent to continue training; a fresh agent when absent or missing.
    #[arg(long)]
    initial_agent: Option<PathBuf>,
    /// Where to write the trained agent.
    #[arg(long)]
    agent_file: Option<PathBuf>,
    /// Where to write the session transcript.
    #[arg(long)]
    transcript_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: ProblemArgs,
    #[arg(long, default_value_t = 10)]
    problems: usize,
    #[arg(long)]
    agent_file: PathBuf,
    /// Fail unless at least this fraction of problems is solved.
    #[arg(long)]
    min_accuracy: Option<f64>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[arg(long)]
    transcript_file: PathBuf,
    /// Fail unless the replayed agent serializes to exactly this file.
    #[arg(long)]
    agent_file: Option<PathBuf>,
    /// Where to write the replayed agent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    report: ReportFormat,
}

#[derive(Debug, Args)]
struct ServerArgs {
    #[arg(long, default_value = atb_service::DEFAULT_BIND)]
    bind: std::net::SocketAddr,
    #[arg(long, default_value = atb_service::DEFAULT_DATA_DIR)]
    data_dir: PathBuf,
}

fn parse_domain(s: &str) -> Result<Domain, String> {
    s.parse()
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Document { path: String, message: String },
    #[error("training failed: {0}")]
    Training(#[from] HarnessError),
    #[error("replay failed: {0}")]
    Replay(String),
    #[error("{0}")]
    Usage(String),
    #[error("server: {0}")]
    Server(String),
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn document_error(path: &Path, e: impl ToString) -> CliError {
    CliError::Document {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn load_agent(path: &Path) -> Result<KnowledgeBase, CliError> {
    KnowledgeBase::from_json(&read(path)?).map_err(|e| document_error(path, e))
}

impl ProblemArgs {
    fn layout(&self) -> Result<LayoutTree, CliError> {
        match &self.layout_file {
            Some(p) => LayoutTree::from_json(&read(p)?).map_err(|e| document_error(p, e)),
            None => Ok(self.domain.layout()),
        }
    }

    fn generate(&self, count: usize) -> Result<Vec<ProblemSpec>, CliError> {
        if count == 0 {
            return Err(CliError::Usage("at least one problem is needed".into()));
        }
        Ok(match self.bias {
            Some(b) => generate_biased(b.into(), count, self.seed),
            None => generate(self.domain, count, self.seed),
        })
    }
}

#[derive(Debug, Serialize)]
struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

#[derive(Debug, Serialize)]
struct Output<T: Serialize> {
    #[serde(flatten)]
    body: T,
    checks: Vec<Check>,
}

/// Prints the report and the checks; true iff every check passed.
fn emit<T: Serialize>(format: ReportFormat, body: T, text: String, checks: Vec<Check>) -> bool {
    let passed = checks.iter().all(|c| c.passed);
    match format {
        ReportFormat::Text => {
            print!("{text}");
            for c in &checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
        }
        ReportFormat::Json => {
            let out = Output { body, checks };
            println!(
                "{}",
                serde_json::to_string_pretty(&out).expect("report serializes")
            );
        }
    }
    passed
}

#[derive(Serialize)]
struct TrainOutput<'a> {
    training: &'a TrainingReport,
}

fn run_train(args: TrainArgs) -> Result<bool, CliError> {
    let layout = args.common.layout()?;
    let problems = args.common.generate(args.problems)?;
    let kb = match &args.initial_agent {
        Some(p) if p.exists() => load_agent(p)?,
        _ => KnowledgeBase::new(),
    };
    let stop = match args.stop_after {
        0 => StopRule::Fixed(problems.len()),
        n => StopRule::Consecutive(n),
    };
    let labels = match args.labels {
        Labels::Default => LabelMode::Default,
        Labels::Canonical => LabelMode::Canonical,
    };
    let run = train(
        kb,
        &layout,
        &mut ScriptedTeacher::new(labels),
        &problems,
        stop,
    )?;
    if let Some(p) = &args.agent_file {
        write(p, &run.kb.to_json())?;
    }
    if let Some(p) = &args.transcript_file {
        write(p, &run.transcript.to_jsonl())?;
    }
    let mut checks = Vec::new();
    if let StopRule::Consecutive(n) = stop {
        checks.push(Check {
            name: "converged",
            passed: run.report.converged,
            detail: format!(
                "{n} consecutive unaided problems within {} training problems",
                problems.len()
            ),
        });
    }
    let text = run.report.render_text();
    Ok(emit(
        args.common.report,
        TrainOutput {
            training: &run.report,
        },
        text,
        checks,
    ))
}

#[derive(Serialize)]
struct EvaluateOutput<'a> {
    evaluation: &'a CorrectnessReport,
}

fn run_evaluate(args: EvaluateArgs) -> Result<bool, CliError> {
    let layout = args.common.layout()?;
    let problems = args.common.generate(args.problems)?;
    let kb = load_agent(&args.agent_file)?;
    let report = evalsim::evaluate(&kb, &layout, &problems);
    let mut checks = Vec::new();
    if let Some(min) = args.min_accuracy {
        if !(0.0..=1.0).contains(&min) {
            return Err(CliError::Usage(format!(
                "--min-accuracy {min} is outside 0..=1"
            )));
        }
        checks.push(Check {
            name: "min-accuracy",
            passed: report.accuracy >= min,
            detail: format!("accuracy {:.3}, required {min:.3}", report.accuracy),
        });
    }
    let text = report.render_text();
    Ok(emit(
        args.common.report,
        EvaluateOutput {
            evaluation: &report,
        },
        text,
        checks,
    ))
}

#[derive(Serialize)]
struct ReplayOutput {
    events: usize,
    methods: usize,
}

fn run_replay(args: ReplayArgs) -> Result<bool, CliError> {
    let transcript = Transcript::from_jsonl(&read(&args.transcript_file)?)
        .map_err(|e| document_error(&args.transcript_file, e))?;
    let session = replay(&transcript).map_err(|e| CliError::Replay(e.to_string()))?;
    let agent = session.kb().to_json();
    if let Some(p) = &args.out {
        write(p, &agent)?;
    }
    let mut checks = Vec::new();
    if let Some(p) = &args.agent_file {
        let expected = read(p)?;
        checks.push(Check {
            name: "identical-agent",
            passed: expected == agent,
            detail: format!(
                "replayed agent {} {}",
                if expected == agent {
                    "matches"
                } else {
                    "differs from"
                },
                p.display()
            ),
        });
    }
    let out = ReplayOutput {
        events: transcript.events.len(),
        methods: session.kb().method_count(),
    };
    let text = format!(
        "replayed {} events; agent has {} methods\n",
        out.events, out.methods
    );
    Ok(emit(args.report, out, text, checks))
}

fn run_server(args: ServerArgs) -> Result<bool, CliError> {
    let config = atb_service::Config {
        data_dir: args.data_dir,
        bind: args.bind,
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Server(e.to_string()))?;
    runtime
        .block_on(atb_service::serve(config))
        .map_err(|e| CliError::Server(e.to_string()))?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => run_train(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Replay(a) => run_replay(a),
        Command::DemoServer(a) => run_server(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("atb: {e}");
            ExitCode::from(2)
        }
    }
}
