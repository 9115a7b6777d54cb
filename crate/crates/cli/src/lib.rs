//! Command-line front end: single solves, the chain MPC experiment and the
//! internal benchmark suite.
//!
//! Exit codes: 0 on success, 1 when a solver fails, 2 on usage or
//! configuration errors.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_mpc, cmd_solve, cmd_suite, MpcRow, SolveJson, SuiteOutcome, SuiteRow};
pub use config::{RunConfig, Settings};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("cannot write output: {0}")]
    Output(String),
    #[error("solver error: {0}")]
    Solver(#[from] alm_panoc::Error),
}

impl CliError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Output(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output(_) => 2,
            CliError::Solver(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "alm-panoc", version, about = "ALM/PANOC solvers, MPC experiment and benchmark suite")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem and write a JSON report.
    Solve(Flags),
    /// Run the hanging-chain MPC experiment and write CSV.
    Mpc(Flags),
    /// Run the internal benchmark suite and write CSV.
    Suite(Flags),
}

#[derive(Debug, Default, Clone, Args)]
pub struct Flags {
    /// Problem name from the internal suite.
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long)]
    pub variant: Option<String>,
    /// Comma-separated list of variants.
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<String>>,
    /// Warm-start MPC steps only.
    #[arg(long, conflicts_with = "cold")]
    pub warm: bool,
    /// Cold-start MPC steps only.
    #[arg(long)]
    pub cold: bool,
    /// Number of MPC steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Final stationarity tolerance.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Final constraint violation tolerance.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// Number of free balls in the chain.
    #[arg(long)]
    pub balls: Option<usize>,
    /// MPC horizon length.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// TOML file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for the randomized suite problems.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl Flags {
    fn as_config(&self) -> RunConfig {
        let mut c = RunConfig {
            problem: self.problem.clone(),
            variant: self.variant.clone(),
            variants: self.variants.clone(),
            seed: self.seed,
            out: self.out.clone(),
            warm_start: match (self.warm, self.cold) {
                (true, _) => Some(true),
                (_, true) => Some(false),
                _ => None,
            },
            n_steps: self.steps,
            jobs: self.jobs,
            ..RunConfig::default()
        };
        c.alm.eps = self.eps;
        c.alm.delta = self.delta;
        c.alm.max_outer = self.max_outer;
        c.chain.n_balls = self.balls;
        c.chain.horizon = self.horizon;
        c
    }

    /// Reads the config file, if any, and applies the flags on top.
    pub fn settings(&self) -> Result<Settings, CliError> {
        let base = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        base.overlay(self.as_config()).resolve()
    }
}

fn execute(command: &Command) -> Result<i32, CliError> {
    match command {
        Command::Solve(flags) => {
            let s = flags.settings()?;
            let report = cmd_solve(&s)?;
            commands::write_json(&report, s.out.as_deref())?;
            if !report.success() {
                eprintln!(
                    "{} on {}: {} (stationarity {:.3e}, violation {:.3e})",
                    report.variant, report.problem, report.status, report.stationarity, report.violation
                );
                return Ok(1);
            }
            Ok(0)
        }
        Command::Mpc(flags) => {
            let s = flags.settings()?;
            let rows = cmd_mpc(&s)?;
            commands::write_csv(&rows, s.out.as_deref())?;
            let failed = rows.iter().filter(|r| r.status != "Converged").count();
            if failed > 0 {
                eprintln!("{failed} of {} MPC steps did not converge", rows.len());
                return Ok(1);
            }
            Ok(0)
        }
        Command::Suite(flags) => {
            let s = flags.settings()?;
            let outcome = cmd_suite(&s)?;
            commands::write_csv(&outcome.rows, s.out.as_deref())?;
            for (v, n) in &outcome.solved {
                eprintln!("{v}: solved {n} of {}", outcome.total);
            }
            Ok(0)
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    execute(&cli.command).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    })
}
