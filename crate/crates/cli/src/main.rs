//! `dtreason`: run session scripts, an interactive prompt, or the HTTP API.
//!
//! Exit codes: 0 success, 2 usage error, 3 script or session error,
//! 4 I/O failure or a solve that ran out of time.

use std::io::{self, BufRead, IsTerminal, Write};
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, ValueEnum};
use serde_json::json;

use dtreason_core::script::{parse_command, read_file, Command, LineError, Output, Runner};
use dtreason_core::session::{Session, SessionError};

const EXIT_SCRIPT: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Parser, Debug)]
#[command(name = "dtreason", version, about = "Interactive constraint reasoning over decision trees")]
struct Args {
    /// Feature metadata JSON loaded before anything else.
    #[arg(long, value_name = "PATH")]
    meta: Option<PathBuf>,
    /// Decision tree JSON; repeat for several models.
    #[arg(long = "model", value_name = "PATH")]
    models: Vec<PathBuf>,
    /// Run a session script instead of the interactive prompt.
    #[arg(long, value_name = "PATH", conflicts_with = "serve")]
    script: Option<PathBuf>,
    /// Output format of answers and errors.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Serve the HTTP API on this address.
    #[arg(long, value_name = "HOST:PORT")]
    serve: Option<String>,
    /// Allow cross-origin requests to the HTTP API.
    #[arg(long, requires = "serve")]
    cors: bool,
    /// Time limit of one solve in seconds (the server defaults to 60).
    #[arg(long, value_name = "SECONDS")]
    budget: Option<f64>,
    /// Drop server sessions idle for this many seconds.
    #[arg(long, value_name = "SECONDS", default_value_t = 3600, requires = "serve")]
    idle_expiry: u64,
}

/// Failure that ends the process.
struct Fatal {
    code: u8,
    message: String,
}

fn exit_code_for(e: &SessionError) -> u8 {
    match e {
        SessionError::Io { .. } => EXIT_IO,
        _ => EXIT_SCRIPT,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DTREASON_LOG", "warn")).init();
    let args = Args::parse();
    let budget = match args.budget {
        Some(s) if !(s.is_finite() && s >= 0.0) => {
            eprintln!("error: --budget must be a non-negative number of seconds");
            return ExitCode::from(2);
        }
        b => b.map(Duration::from_secs_f64),
    };
    let result = match &args.serve {
        Some(addr) => serve(addr, &args, budget),
        None => preload(&args).and_then(|session| {
            let mut runner = Runner::new(session, ".");
            runner.budget = budget;
            match &args.script {
                Some(path) => batch(runner, path, args.format),
                None => repl(runner, args.format),
            }
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn preload(args: &Args) -> Result<Session, Fatal> {
    let fatal = |e: SessionError| Fatal {
        code: exit_code_for(&e),
        message: e.to_string(),
    };
    let mut session = match &args.meta {
        Some(p) => Session::from_metadata_json(&read_file(p).map_err(fatal)?).map_err(fatal)?,
        None => Session::default(),
    };
    for p in &args.models {
        let text = read_file(p).map_err(fatal)?;
        session.declare_model_json(&text).map_err(fatal)?;
    }
    Ok(session)
}

fn serve(addr: &str, args: &Args, budget: Option<Duration>) -> Result<u8, Fatal> {
    let io_fail = |message: String| Fatal { code: EXIT_IO, message };
    let addr: SocketAddr = addr
        .to_socket_addrs()
        .map_err(|e| io_fail(format!("{addr}: {e}")))?
        .next()
        .ok_or_else(|| io_fail(format!("{addr}: no address")))?;
    let defaults = dtreason_service::Config::default();
    let config = dtreason_service::Config {
        budget: budget.unwrap_or(defaults.budget),
        idle_expiry: Duration::from_secs(args.idle_expiry),
        cors: args.cors,
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| io_fail(e.to_string()))?;
    rt.block_on(dtreason_service::serve(addr, config))
        .map_err(|e| io_fail(format!("{addr}: {e}")))?;
    Ok(0)
}

fn print_error(e: &LineError, format: Format) {
    match format {
        Format::Text => eprintln!("error: {e}"),
        Format::Json => {
            let pos = e.pos();
            let doc = json!({
                "kind": e.error.kind(),
                "message": e.error.to_string(),
                "line": pos.map(|p| p.line).unwrap_or(e.line),
                "column": pos.map(|p| p.column),
            });
            eprintln!("{doc}");
        }
    }
}

/// Runs one line and prints what it produced; returns whether a solve timed out.
fn step(runner: &mut Runner, line: &str, line_no: usize, format: Format, out: &mut impl Write) -> Result<bool, LineError> {
    if format == Format::Json && matches!(parse_command(line), Ok(Some(Command::Show))) {
        let _ = writeln!(out, "{}", runner.session.state_json());
        return Ok(false);
    }
    let mut timed_out = false;
    match runner.execute_line(line, line_no)? {
        Output::Answer(a) => {
            timed_out = a.status == "timeout";
            match format {
                Format::Text => {
                    let _ = write!(out, "{}", a.render_text());
                }
                Format::Json => {
                    let _ = writeln!(out, "{}", a.to_json());
                }
            }
        }
        Output::Text(t) => {
            let _ = write!(out, "{t}");
        }
        Output::Nothing => {}
    }
    Ok(timed_out)
}

fn batch(mut runner: Runner, path: &Path, format: Format) -> Result<u8, Fatal> {
    let text = read_file(path).map_err(|e| Fatal {
        code: EXIT_IO,
        message: e.to_string(),
    })?;
    runner.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut timed_out = false;
    for (i, line) in text.lines().enumerate() {
        match step(&mut runner, line, i + 1, format, &mut out) {
            Ok(t) => timed_out |= t,
            Err(e) => {
                let _ = out.flush();
                print_error(&e, format);
                return Ok(exit_code_for(&e.error));
            }
        }
    }
    Ok(if timed_out { EXIT_IO } else { 0 })
}

const HELP: &str = "commands:
  meta <path|json>            set feature metadata
  model <path|json>           register a decision tree
  instance <name> <model> label=<class> [minconf=<rat>]
  constraint <text>           add user constraints
  solve [project=[..]] [minimize=l1norm(F, CE)|dist(F, CE, beta=.., gamma=..)]
  undo | reset | show         edit or list the session
  help | quit
";

fn repl(mut runner: Runner, format: Format) -> Result<u8, Fatal> {
    let interactive = io::stdin().is_terminal();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut line_no = 0;
    let mut lines = io::stdin().lock().lines();
    loop {
        if interactive {
            let _ = write!(out, "> ");
            let _ = out.flush();
        }
        let Some(line) = lines.next() else { break };
        let line = line.map_err(|e| Fatal {
            code: EXIT_IO,
            message: e.to_string(),
        })?;
        line_no += 1;
        match line.trim() {
            "quit" | "exit" => break,
            "help" => {
                let _ = write!(out, "{HELP}");
                continue;
            }
            _ => {}
        }
        if let Err(e) = step(&mut runner, &line, line_no, format, &mut out) {
            let _ = out.flush();
            print_error(&e, format);
        }
    }
    Ok(0)
}
