//! Command-line front end: CSV ingestion, experiment configuration,
//! replication of the built-in studies, the analytic check suites, and
//! serialized reports.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 check-suite failure,
//! 3 sampler failure.

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub mod check;
pub mod config;
pub mod csv_io;
pub mod estimate;
pub mod replicate;
pub mod report;
pub mod studies;

use config::ExperimentConfig;
use replicate::StudyKind;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    CheckFailed(usize),
    Sampler(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::CheckFailed(_) => 2,
            CliError::Sampler(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Io(msg) => write!(f, "{msg}"),
            CliError::CheckFailed(count) => write!(f, "{count} check(s) failed"),
            CliError::Sampler(msg) => write!(f, "sampler failure: {msg}"),
        }
    }
}

impl From<crate::error::Error> for CliError {
    fn from(e: crate::error::Error) -> Self {
        match e {
            crate::error::Error::Sampler(msg) => CliError::Sampler(msg),
            other => CliError::Usage(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pcic", version, about = "Generalization error estimation for quasi-Bayesian procedures")]
struct Cli {
    /// Cap worker parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate generalization errors for a CSV dataset.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a built-in replication study and write its figure data.
    Replicate {
        #[arg(value_enum)]
        study: StudyArg,
        #[arg(long)]
        config: PathBuf,
        /// Output directory for replications.csv and summary.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the analytic-oracle and sensitivity check suites.
    Check {
        /// Reduced draw counts with adapted tolerances.
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StudyArg {
    Location,
    DpLogistic,
    Outlier,
    Sensitivity,
}

impl From<StudyArg> for StudyKind {
    fn from(value: StudyArg) -> Self {
        match value {
            StudyArg::Location => StudyKind::Location,
            StudyArg::DpLogistic => StudyKind::DpLogistic,
            StudyArg::Outlier => StudyKind::Outlier,
            StudyArg::Sensitivity => StudyKind::Sensitivity,
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Estimate { config, data, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            estimate::cmd_estimate(&cfg, &data, &out)
        }
        Command::Replicate { study, config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            replicate::cmd_replicate(study.into(), &cfg, &out)
        }
        Command::Check { quick } => {
            let opts = check::CheckOptions { quick, ..Default::default() };
            let results = check::run_check_suite(&opts);
            let mut failures = 0usize;
            for r in &results {
                if r.passed {
                    println!(
                        "PASS {}: observed {:.6e} vs expected {:.6e} (tol {:.3e})",
                        r.name, r.observed, r.expected, r.tolerance
                    );
                } else {
                    failures += 1;
                    println!(
                        "FAIL {}: observed {:.6e} vs expected {:.6e} (tol {:.3e}) — {}",
                        r.name, r.observed, r.expected, r.tolerance, r.detail
                    );
                }
            }
            if failures > 0 {
                Err(CliError::CheckFailed(failures))
            } else {
                Ok(())
            }
        }
    }
}

fn run_parsed(cli: Cli) -> Result<(), CliError> {
    match cli.threads {
        None => dispatch(cli.command),
        Some(threads) => {
            if threads == 0 {
                return Err(CliError::Usage("--threads must be positive".to_string()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot build worker pool: {e}")))?;
            pool.install(|| dispatch(cli.command))
        }
    }
}

/// Parses arguments and runs a command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with exit code 0
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_parsed(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
