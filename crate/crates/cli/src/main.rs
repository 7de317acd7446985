//! Command-line entry point: plan, execute, batch, analyze, adapt, render.
//!
//! Exit codes: 0 success, 2 schema or parse error, 3 no feasible plan,
//! 4 search budget exhausted, 5 execution-engine invariant violation.

mod commands;
mod manifest;

use clap::{Parser, Subcommand};

use commands::{adapt, analyze, batch, execute, plan, render};

#[derive(Parser)]
#[command(
    name = "skillgraph",
    about = "Skill-graph planning and execution for two-arm brick assembly",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ground an assembly task into a skill plan.
    Plan(plan::Args),
    /// Execute a plan and write trace and logs.
    Execute(execute::Args),
    /// Run a seeded Monte Carlo batch of executions.
    Batch(batch::Args),
    /// Summarize a log store.
    Analyze(analyze::Args),
    /// Closed-loop adaptation: risk, evaluators, checks, reallocation,
    /// bias, bandit.
    Adapt(adapt::Args),
    /// Render a schedule as a text or SVG Gantt chart.
    Render(render::Args),
}

fn main() {
    // dying quietly on a closed pipe beats a panic backtrace under `head`
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Plan(args) => plan::run(args),
        Command::Execute(args) => execute::run(args),
        Command::Batch(args) => batch::run(args),
        Command::Analyze(args) => analyze::run(args),
        Command::Adapt(args) => adapt::run(args),
        Command::Render(args) => render::run(args),
    };
    match result {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {:#}", err.error);
            std::process::exit(err.code);
        }
    }
}

/// An error paired with the exit code contract.
pub struct CliError {
    pub code: i32,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn schema(error: anyhow::Error) -> CliError {
        CliError { code: 2, error }
    }

    pub fn no_plan(error: anyhow::Error) -> CliError {
        CliError { code: 3, error }
    }

    pub fn budget(error: anyhow::Error) -> CliError {
        CliError { code: 4, error }
    }

    pub fn engine(error: anyhow::Error) -> CliError {
        CliError { code: 5, error }
    }
}

type CliResult = Result<(), CliError>;
