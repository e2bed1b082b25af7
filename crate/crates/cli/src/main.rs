//! Command-line front end: configure, run, resume and inspect sessions.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rtlsquad_core::doc::{read_transcript, render_markdown, render_version_table};
use rtlsquad_core::domain::DesignInputs;
use rtlsquad_core::eda::EdaBackendKind;
use rtlsquad_core::orchestrator::{
    resume_session, start_session, OrchestratorConfig, Outcome, ProviderKind, SessionDir,
};

#[derive(Parser)]
#[command(
    name = "rtlsquad",
    version,
    about = "Multi-agent RTL generation and optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start a new session from a specification and a testbench
    Run(Box<RunArgs>),
    /// Continue a previously saved session
    Resume(SessionArgs),
    /// Re-render the decision document and print the version table
    Report(SessionArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Design specification file
    #[arg(long)]
    spec: PathBuf,
    /// Simulation testbench file
    #[arg(long)]
    testbench: PathBuf,
    /// Optional initial RTL source
    #[arg(long)]
    init_code: Option<PathBuf>,
    /// JSON configuration file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Session output directory
    #[arg(long, default_value = "rtlsquad-session")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Use the deterministic mock EDA backend
    #[arg(long)]
    mock_eda: bool,
    /// Drive agents from a JSONL reply script instead of a remote model
    #[arg(long)]
    script: Option<PathBuf>,
    /// Chat completions endpoint base URL
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name for the remote provider
    #[arg(long)]
    model: Option<String>,
    /// Accept the selected best version without prompting
    #[arg(long)]
    auto_accept: bool,
    #[arg(long)]
    max_outer: Option<u32>,
    #[arg(long)]
    max_inner: Option<u32>,
}

#[derive(Args)]
struct SessionArgs {
    /// Session directory
    #[arg(long)]
    session: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap exits 2 by default; usage problems exit 1 here
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let code = match cli.command {
        Command::Run(args) => cmd_run(*args),
        Command::Resume(args) => cmd_resume(args),
        Command::Report(args) => cmd_report(args),
    };
    ExitCode::from(code)
}

fn read_file(path: &Path, what: &str) -> Result<String, u8> {
    std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {what} file {}: {e}", path.display());
        1u8
    })
}

fn build_config(args: &RunArgs) -> Result<OrchestratorConfig, u8> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = read_file(path, "config")?;
            serde_json::from_str::<OrchestratorConfig>(&text).map_err(|e| {
                eprintln!("error: bad config file {}: {e}", path.display());
                1u8
            })?
        }
        None => OrchestratorConfig::default(),
    };
    // flags win over config-file values
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.mock_eda {
        cfg.eda.backend = EdaBackendKind::Mock;
    }
    if let Some(script) = &args.script {
        cfg.provider.kind = ProviderKind::Scripted;
        cfg.provider.script_path = Some(script.clone());
    }
    if let Some(endpoint) = &args.endpoint {
        cfg.provider.endpoint = endpoint.clone();
    }
    if let Some(model) = &args.model {
        cfg.provider.model = model.clone();
    }
    if args.auto_accept {
        cfg.auto_accept = true;
    }
    if let Some(max_outer) = args.max_outer {
        cfg.max_outer_iters = max_outer;
    }
    if let Some(max_inner) = args.max_inner {
        cfg.max_inner_iters = max_inner;
    }
    Ok(cfg)
}

fn print_outcome(outcome: &Outcome, dir: &SessionDir) {
    match outcome {
        Outcome::Accepted(id) => println!("outcome: accepted v{id}"),
        Outcome::Exhausted(id) => println!("outcome: iteration budget exhausted, best is v{id}"),
        Outcome::Failed(reason) => println!("outcome: failed ({reason:?})"),
    }
    println!("session:       {}", dir.root().display());
    println!("decision path: {}", dir.decision_path().display());
    println!("transcript:    {}", dir.transcript().display());
}

fn cmd_run(args: RunArgs) -> u8 {
    let spec_text = match read_file(&args.spec, "spec") {
        Ok(text) => text,
        Err(code) => return code,
    };
    let testbench_text = match read_file(&args.testbench, "testbench") {
        Ok(text) => text,
        Err(code) => return code,
    };
    let initial_code = match &args.init_code {
        Some(path) => match read_file(path, "initial code") {
            Ok(text) => Some(text),
            Err(code) => return code,
        },
        None => None,
    };
    let cfg = match build_config(&args) {
        Ok(cfg) => cfg,
        Err(code) => return code,
    };
    if args.out.join("session.json").exists() {
        eprintln!(
            "error: {} already holds a session; use `resume` or another --out",
            args.out.display()
        );
        return 1;
    }

    let inputs = DesignInputs {
        spec_text,
        testbench_text,
        initial_code,
    };
    let (mut orch, mut state) = match start_session(cfg, inputs, &args.out) {
        Ok(pair) => pair,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let outcome = orch.run(&mut state);
    print_outcome(&outcome, orch.dir());
    outcome.exit_code() as u8
}

fn cmd_resume(args: SessionArgs) -> u8 {
    if !args.session.is_dir() {
        eprintln!(
            "error: session directory {} does not exist",
            args.session.display()
        );
        return 1;
    }
    let (mut orch, mut state) = match resume_session(&args.session) {
        Ok(pair) => pair,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let outcome = orch.run(&mut state);
    print_outcome(&outcome, orch.dir());
    outcome.exit_code() as u8
}

fn cmd_report(args: SessionArgs) -> u8 {
    if !args.session.is_dir() {
        eprintln!(
            "error: session directory {} does not exist",
            args.session.display()
        );
        return 1;
    }
    let dir = match SessionDir::open(&args.session) {
        Ok(dir) => dir,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let (_, state) = match dir.load() {
        Ok(pair) => pair,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let events = match read_transcript(&dir.transcript()) {
        Ok(events) => events,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let markdown = render_markdown(&events);
    if let Err(e) = std::fs::write(dir.decision_path(), &markdown) {
        eprintln!("error: cannot write decision path: {e}");
        return 2;
    }
    print!("{}", render_version_table(&state.versions));
    println!("decision path: {}", dir.decision_path().display());
    0
}
