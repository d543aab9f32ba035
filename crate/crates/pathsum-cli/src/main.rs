//! `pathsum`: runs the two-level, CDT and spin-diffusion scenarios and the
//! self-check suite.  Exit status 0 on success, 1 when a check fails or a
//! computation breaks down, 2 on usage, configuration or input errors.

mod config;
mod scenarios;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::{Config, ConfigError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Model(#[from] pathsum::Error),
    #[error("output: {0}")]
    Io(#[from] io::Error),
    #[error("output: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// Output closed early by the reader, e.g. `pathsum ... | head`.
    fn is_broken_pipe(&self) -> bool {
        let kind = match self {
            CliError::Io(e) => Some(e.kind()),
            CliError::Csv(e) => match e.kind() {
                csv::ErrorKind::Io(e) => Some(e.kind()),
                _ => None,
            },
            _ => None,
        };
        kind == Some(io::ErrorKind::BrokenPipe)
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            // bad geometry files are input errors, not failed computations
            CliError::Model(pathsum::Error::Geometry(_)) => 2,
            CliError::Model(_) | CliError::Io(_) | CliError::Csv(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pathsum", version, about = "Path-sum evolution operators for driven two-level systems and spin networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario configuration (`key = value`, `[section]` per subcommand)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Write output here instead of stdout
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true, env = "PATHSUM_THREADS", value_name = "N")]
    threads: Option<usize>,
    /// Number of time-grid points; overrides `points` in the config
    #[arg(long, global = true, value_name = "N")]
    grid_points: Option<usize>,
    /// Neumann order; overrides `orders` (bloch-siegert only)
    #[arg(long, global = true, value_name = "N")]
    order: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Transition probability of the Bloch-Siegert Hamiltonian, oracle and Neumann orders
    BlochSiegert,
    /// Return probability, ψ transition, <σx> and their averages under strong driving
    Cdt,
    /// Single-excitation spin diffusion under magic-angle spinning
    SpinDiffusion,
    /// Run the numerical self-checks
    Verify,
}

impl Command {
    fn section(&self) -> &'static str {
        match self {
            Command::BlochSiegert => "bloch-siegert",
            Command::Cdt => "cdt",
            Command::SpinDiffusion => "spin-diffusion",
            Command::Verify => "verify",
        }
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let c = &cli.common;
    if let Some(n) = c.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let cfg = match &c.config {
        Some(path) => Config::from_file(path)?,
        None => Config::default(),
    };
    let mut params = cfg.scenario(cli.command.section());
    if let Some(n) = c.grid_points {
        params.set("points", n.to_string());
    }
    if let Some(n) = c.order {
        if !matches!(cli.command, Command::BlochSiegert) {
            return Err(CliError::Usage("--order only applies to bloch-siegert".into()));
        }
        params.set("orders", n.to_string());
    }
    let out = output(&c.out)?;
    let (summary, passed) = match cli.command {
        Command::BlochSiegert => (scenarios::bloch_siegert(&params, out)?, true),
        Command::Cdt => (scenarios::cdt(&params, out)?, true),
        Command::SpinDiffusion => (scenarios::spin_diffusion_run(&params, out)?, true),
        Command::Verify => scenarios::verify(&params, out)?,
    };
    eprintln!("{summary}");
    Ok(passed)
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors by itself
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("pathsum: checks failed");
            ExitCode::from(1)
        }
        Err(e) if e.is_broken_pipe() => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pathsum: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
