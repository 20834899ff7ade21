//! `vizsynth`: synthesize visualizations from example elements, apply
//! transformation programs, inspect decompiled sketches, or run the HTTP
//! service.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;

#[derive(Parser)]
#[command(name = "vizsynth", version, about = "Visualization synthesis from examples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize candidates for a task file and write them to a directory.
    Synth {
        /// Task JSON: {"input": "table.csv", "elements": [...], "config": {...}}.
        task: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        search: SearchFlags,
    },
    /// Apply a program to a CSV table and print the result as CSV.
    EvalProgram {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        program: String,
    },
    /// Print the layer sketches and example tables for example elements.
    Decompile {
        /// Element list as inline JSON or a path to a JSON file.
        #[arg(long)]
        elements: String,
    },
    /// Run the HTTP service (settings from SYNTH_* variables).
    Serve {
        #[arg(long, env = "SYNTH_PORT")]
        port: Option<u16>,
        #[command(flatten)]
        search: SearchFlags,
    },
}

#[derive(Args, Debug, Default, Clone)]
pub struct SearchFlags {
    /// Deterministic mode: one worker without a time budget.
    #[arg(long, conflicts_with = "budgets_ms")]
    pub seedless: bool,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub max_candidates: Option<usize>,
    /// Comma list of per-worker budgets in milliseconds, `inf` for none.
    #[arg(long)]
    pub budgets_ms: Option<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { task, out, search } => commands::synth(&task, &out, &search),
        Command::EvalProgram { input, program } => commands::eval_program(&input, &program),
        Command::Decompile { elements } => commands::decompile(&elements),
        Command::Serve { port, search } => commands::serve(port, &search),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::NoCandidates) => {
            eprintln!("{}", CliError::NoCandidates);
            ExitCode::from(CliError::NoCandidates.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
