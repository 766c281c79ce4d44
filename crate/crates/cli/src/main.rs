use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use reflexa_cli::exit;
use reflexa_cli::replay::replay;
use reflexa_cli::rice::{self, RiceError};
use reflexa_cli::script::{self, RunError, Script};
use reflexa_cli::export;
use reflexa_core::gateway::ProviderConfig;
use reflexa_core::persist::{self, PersistError};
use reflexa_core::{Engine, SessionSettings, SessionState};
use reflexa_server::{AppState, SessionStore};

#[derive(Parser)]
#[command(name = "reflexa", version, about = "Reflection-scaffolded creative coding sessions")]
struct Cli {
    /// Directory of inspiration entries (*.json); defaults to the bundled corpus.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Where corpus embeddings are cached between runs.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Create an empty session file.
    New {
        #[arg(long)]
        mock: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a JSON script against a fresh session.
    Run {
        script: PathBuf,
        #[arg(long)]
        mock: bool,
        /// Session file to write (default: <session_id>.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-derive every exchange of a mock session and check it matches.
    Replay {
        session: PathBuf,
        /// Also write the re-serialized session here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the version graph.
    Export {
        session: PathBuf,
        #[arg(long, value_enum)]
        format: Format,
    },
    /// Score a RiCE questionnaire: nine items Cp1-3, Se1-3, Ex1-3.
    Rice {
        #[arg(num_args = 1.., allow_negative_numbers = true)]
        items: Vec<f64>,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
        scale: Option<Vec<f64>>,
    },
    /// Serve the REST API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, default_value = "sessions")]
        data_dir: PathBuf,
        #[arg(long)]
        mock: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Dot,
    Json,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl ToString) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }
}

impl From<PersistError> for Failure {
    fn from(e: PersistError) -> Self {
        Self::new(exit::IO, e)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}

fn engine(cli: &Cli, mock: bool) -> Result<Engine, Failure> {
    let mut config = ProviderConfig::from_env();
    config.mock |= mock;
    Engine::from_config(&config, cli.corpus.as_deref(), cli.cache_dir.as_deref()).map_err(|e| {
        let code = if e.code() == "unreadable-file" { exit::IO } else { exit::ENGINE };
        Failure::new(code, e)
    })
}

fn mock_requested(flag: bool) -> bool {
    flag || ProviderConfig::from_env().mock
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Cmd::New { mock, out } => {
            let mock = mock_requested(*mock);
            let settings = SessionSettings { mock, ..SessionSettings::default() };
            let id = SessionState::fresh_id();
            let session = SessionState::create(id, settings).map_err(|e| Failure::new(exit::ENGINE, e))?;
            let path = out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.json", session.session_id)));
            persist::save(&session, &path)?;
            println!("{}", path.display());
            Ok(())
        }
        Cmd::Run { script: path, mock, out } => run(&cli, path, mock_requested(*mock), out.as_deref()),
        Cmd::Replay { session, out } => {
            let text = read(session)?;
            let state = persist::from_str(&text)?;
            let report = replay(&engine(&cli, true)?, &state, &text);
            if let Some(out) = out {
                persist::save(&state, out)?;
            }
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            if report.ok() {
                Ok(())
            } else {
                Err(Failure::new(exit::ENGINE, "replay diverged from the session file"))
            }
        }
        Cmd::Export { session, format } => {
            let state = persist::load(session)?;
            match format {
                Format::Dot => print!("{}", export::to_dot(&state)),
                Format::Json => print!("{}", export::to_json(&state)),
            }
            Ok(())
        }
        Cmd::Rice { items, scale } => {
            let scale = match scale.as_deref() {
                Some([lo, hi]) => (*lo, *hi),
                _ => rice::DEFAULT_SCALE,
            };
            let scores = rice::score(items, scale).map_err(|e: RiceError| Failure::new(exit::USAGE, e))?;
            println!("{}", serde_json::to_string(&scores).unwrap());
            Ok(())
        }
        Cmd::Serve { addr, data_dir, mock } => {
            let mock = mock_requested(*mock);
            let engine = engine(&cli, mock)?;
            let store = SessionStore::new(data_dir, mock).map_err(|e| Failure::new(exit::IO, e))?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::new(exit::IO, e))?;
            runtime
                .block_on(reflexa_server::serve(*addr, AppState::new(engine, store)))
                .map_err(|e| Failure::new(exit::IO, format!("serve on {addr}: {e}")))
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::new(exit::IO, format!("{}: {e}", path.display())))
}

fn run(cli: &Cli, path: &Path, mock: bool, out: Option<&Path>) -> Result<(), Failure> {
    let text = read(path)?;
    let script = Script::parse(&text).map_err(|e| Failure::new(exit::USAGE, e))?;
    let mut settings = script.settings.clone().unwrap_or_default();
    settings.mock = mock;
    let id = if mock { script::mock_session_id(&text) } else { SessionState::fresh_id() };
    let mut session = SessionState::create(id, settings).map_err(|e| Failure::new(exit::USAGE, e))?;
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(format!("{}.json", session.session_id)));
    let engine = engine(cli, mock)?;

    let result = script::run_script(&engine, &script.commands, &mut session, Some(&out), |step| {
        println!("{step}");
    });
    match result {
        Ok(()) => {}
        Err(RunError::Persist(e)) => return Err(e.into()),
        Err(e @ RunError::Engine { .. }) => {
            return Err(Failure::new(exit::ENGINE, format!("{e} (partial session saved to {})", out.display())))
        }
    }
    let view = session.graph.view();
    eprintln!(
        "session {} -> {}: {} nodes, {} edges, active {}",
        session.session_id,
        out.display(),
        view.nodes.len(),
        view.edges.len(),
        view.active_id
    );
    Ok(())
}
