//! `conceptkit`: concept extraction, attribution, faithfulness evaluation and
//! strategy export from NPY activation dumps.

mod commands;
mod config;
mod error;
mod labels;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{AttributeArgs, EvalCatsArgs, EvalExtractionArgs, ExtractArgs, StrategyArgs, VerifyArgs};

#[derive(Parser)]
#[command(name = "conceptkit", version, about = "Concept-based explanations for activation matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a concept dictionary and write U.npy, V.npy and meta.json.
    Extract(ExtractArgs),
    /// Score extraction methods on one or more activation files.
    EvalExtraction(EvalExtractionArgs),
    /// Compute per-sample concept importances.
    Attribute(AttributeArgs),
    /// Deletion, insertion and μFidelity for a directory of importance files.
    EvalCats(EvalCatsArgs),
    /// Prevalence, reliability and the strategic cluster graph.
    Strategy(StrategyArgs),
    /// Check greedy optimality and the closed forms on random affine heads.
    Verify(VerifyArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Extract(args) => commands::extract(args),
        Command::EvalExtraction(args) => commands::eval_extraction(args),
        Command::Attribute(args) => commands::attribute(args),
        Command::EvalCats(args) => commands::eval_cats(args),
        Command::Strategy(args) => commands::strategy(args),
        Command::Verify(args) => commands::verify(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.render());
            ExitCode::from(e.exit_code())
        }
    }
}
