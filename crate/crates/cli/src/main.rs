//! `sde-gridopt`: runs the grid-optimisation experiments from a TOML config
//! and writes CSV tables.

mod commands;
mod config;

use std::fmt;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Artifact, Context};
use config::ExperimentConfig;

pub const THREADS_ENV: &str = "SDE_GRIDOPT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "sde-gridopt", version, about = "Optimal time grids for linear SDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate G_t, Q_t, K_t and the weights F_t, S_t.
    Gramian(Common),
    /// Filter errors over a step-count sweep with their fine-grid limits.
    Convergence(Common),
    /// Monte Carlo check of the predicted filter errors.
    McVerify(Common),
    /// Closed-form and quadrature optimum for the scalar OU model.
    OuTable(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config. Without one, CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress progress messages.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Io(PathBuf, io::Error),
    Core(sde_gridopt::Error),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            Self::Usage(_) => "usage",
            Self::Config(_) => "config",
            Self::Io(..) => "io",
            Self::Core(e) => e.kind(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) | Self::Config(m) => f.write_str(m),
            Self::Io(path, e) => write!(f, "{}: {e}", path.display()),
            Self::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<sde_gridopt::Error> for CliError {
    fn from(e: sde_gridopt::Error) -> Self {
        Self::Core(e)
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn emit(artifacts: &[Artifact], out: Option<&PathBuf>, quiet: bool) -> Result<(), CliError> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.clone(), e))?;
            for a in artifacts {
                let path = dir.join(a.name);
                std::fs::write(&path, &a.body).map_err(|e| CliError::Io(path.clone(), e))?;
                if !quiet {
                    eprintln!("wrote {}", path.display());
                }
            }
        }
        None => {
            let mut stdout = io::stdout().lock();
            for (i, a) in artifacts.iter().enumerate() {
                if i > 0 {
                    writeln!(stdout).map_err(|e| CliError::Io("<stdout>".into(), e))?;
                }
                stdout
                    .write_all(&a.body)
                    .map_err(|e| CliError::Io("<stdout>".into(), e))?;
            }
        }
    }
    Ok(())
}

type CommandFn = fn(&Context) -> Result<Vec<Artifact>, CliError>;

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let (command, common): (CommandFn, Common) = match cli.command {
        Command::Gramian(c) => (commands::gramian, c),
        Command::Convergence(c) => (commands::convergence, c),
        Command::McVerify(c) => (commands::mc_verify, c),
        Command::OuTable(c) => (commands::ou_table, c),
    };
    let config = ExperimentConfig::load(&common.config)?;
    let out = common.out.clone().or_else(|| config.output.dir.clone());
    let seed = common.seed.unwrap_or(config.mc.seed);
    let artifacts = command(&Context { config, seed })?;
    emit(&artifacts, out.as_ref(), common.quiet)
}

fn main() -> ExitCode {
    let result = match Cli::try_parse() {
        Ok(cli) => run(cli),
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            Err(CliError::Usage(first.trim_start_matches("error: ").to_string()))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        // Reader closed the pipe (`| head`); not an error.
        Err(CliError::Io(_, e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error: kind={} message={}", e.kind(), message.trim());
            ExitCode::FAILURE
        }
    }
}
