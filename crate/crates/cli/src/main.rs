//! `seq2seq-univ`: build, convert and verify memorizing Transformer constructions.

mod config;
mod run;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Command, RunArgs, RunConfig, BUDGET_ENV};

#[derive(Debug, Parser)]
#[command(name = "seq2seq-univ", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Build the modified network for a target and write it as JSON
    Construct(RunArgs),
    /// Run a verification suite and write JSON/CSV reports
    Verify(RunArgs),
    /// Anneal the construction into a softmax/ReLU network and tabulate the error
    Convert(RunArgs),
    /// Exact and Monte Carlo d_p between target and construction
    DpReport(RunArgs),
    /// Measured sublayer counts against their closed forms
    LayerCount(RunArgs),
}

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid configuration (exit 2).
    Config(String),
    /// The construction would exceed the layer or enumeration budget (exit 3).
    Budget(String),
    /// A verified property does not hold (exit 1).
    Failed(String),
    /// Anything else that stopped the run (exit 1).
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Budget(_) => 3,
            CliError::Failed(_) | CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Budget(m) => write!(f, "budget exceeded: {m}"),
            CliError::Failed(m) => write!(f, "property failure: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<seq2seq_univ::Error> for CliError {
    fn from(e: seq2seq_univ::Error) -> Self {
        use seq2seq_univ::Error as E;
        match e {
            E::BudgetExceeded { .. } | E::EnumerationBudget { .. } => CliError::Budget(e.to_string()),
            E::Parse(_) | E::InvalidGrid(_) | E::InvalidParameter(_) | E::NotEquivariant(_) | E::Json(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Construct(a) => (Command::Construct, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Convert(a) => (Command::Convert, a),
        Cmd::DpReport(a) => (Command::DpReport, a),
        Cmd::LayerCount(a) => (Command::LayerCount, a),
    };
    let outcome = RunConfig::resolve(command, args, std::env::var(BUDGET_ENV).ok()).and_then(|cfg| run::run(&cfg));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("seq2seq-univ: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
