use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use itref_core::config::{BackendKind, RunConfig};
use itref_core::gateway::mock::{MockBackend, MockScript};
use itref_core::gateway::{ChatBackend, Clock, FixedClock, OpenAiBackend, SystemClock};
use itref_core::pipeline::{rebuild_report, run_experiment, Artifacts, Experiment, Mode};
use itref_eval::{serve_blocking, ServeOptions};

#[derive(Parser)]
#[command(name = "itref", version, about = "Iterative LLM translation refinement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides the configured output directory.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Translate the sampled test set once.
    Translate(RunArgs),
    /// Translate, then run every configured refinement strategy.
    Refine(RunArgs),
    /// Run the configured strategies on external system outputs.
    RefineExternal(RunArgs),
    /// Rebuild the tables, trends and cases of a finished run.
    Report {
        /// Output directory of a finished run.
        dir: PathBuf,
    },
    /// Serve the pairwise human evaluation API.
    ServeEval {
        /// Directory holding campaigns and judgments.
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Bearer token for operator routes.
        #[arg(long, env = "ITREF_OPERATOR_TOKEN", hide_env_values = true)]
        operator_token: String,
        /// Static files served outside /api.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
}

type Backend = (Arc<dyn ChatBackend>, Arc<dyn Clock>);

fn backend_for(config: &RunConfig) -> Result<Backend, String> {
    match config.backend.kind {
        BackendKind::Mock => {
            let name = config.backend.script.as_deref().unwrap_or("identity");
            let script = MockScript::by_name(name, config.backend.script_seed)
                .ok_or_else(|| format!("unknown mock script `{name}`"))?;
            Ok((Arc::new(MockBackend::new(script)), Arc::new(FixedClock(0))))
        }
        BackendKind::Openai => {
            let backend = OpenAiBackend::from_config(&config.backend.config).map_err(|e| e.to_string())?;
            Ok((Arc::new(backend), Arc::new(SystemClock)))
        }
    }
}

fn run(args: RunArgs, mode: Mode) -> Result<(), String> {
    let mut config = RunConfig::load(&args.config).map_err(|e| e.to_string())?;
    if let Some(out) = args.output {
        config.run.output_dir = out;
    }
    let (backend, clock) = backend_for(&config)?;
    let exp = Experiment {
        config,
        mode,
        backend,
        clock,
    };
    let outcome = run_experiment(&exp).map_err(|e| e.to_string())?;
    let out = &exp.config.run.output_dir;
    print_table(out)?;
    let stats = &outcome.stats;
    eprintln!(
        "{} instances, {} excluded, {} calls ({} cached), written to {}",
        outcome.set.instances.len(),
        outcome.manifest.excluded.len(),
        stats.network_calls,
        stats.cache_hits,
        out.display()
    );
    Ok(())
}

fn print_table(dir: &Path) -> Result<(), String> {
    let path = dir.join(Artifacts::TABLE_TEXT);
    let table = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    print!("{table}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Translate(args) => run(args, Mode::Translate),
        Command::Refine(args) => run(args, Mode::Refine),
        Command::RefineExternal(args) => run(args, Mode::RefineExternal),
        Command::Report { dir } => rebuild_report(&dir)
            .map_err(|e| e.to_string())
            .and_then(|_| print_table(&dir)),
        Command::ServeEval {
            store,
            addr,
            operator_token,
            ui_dir,
        } => {
            let options = ServeOptions {
                addr,
                store_dir: store,
                operator_token,
                ui_dir,
            };
            serve_blocking(options, |bound| eprintln!("listening on http://{bound}")).map_err(|e| e.to_string())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
