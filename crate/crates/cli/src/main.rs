mod commands;
mod failure;
mod settings;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use settings::{Flags, Settings};

/// Quality estimation for synthetic Hinglish: train, evaluate and apply the
/// dual Bi-LSTM rating classifier.
#[derive(Parser, Debug)]
#[command(name = "hinge-qe", version)]
struct Cli {
    /// Only log warnings and errors
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model and write checkpoint, vocabularies, history and manifest
    Train(Flags),
    /// Score a checkpoint on a labelled file (`--test`, else `--val`)
    Evaluate(Flags),
    /// Write one predicted score per row of `--input`
    Predict(Flags),
    /// Describe a corpus file: labels, sentence lengths, vocabulary sizes
    DataStats(Flags),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();

    type Run = fn(&Settings) -> Result<(), failure::Failure>;
    let (flags, run): (&Flags, Run) = match &cli.command {
        Command::Train(f) => (f, commands::train),
        Command::Evaluate(f) => (f, commands::evaluate),
        Command::Predict(f) => (f, commands::predict),
        Command::DataStats(f) => (f, commands::data_stats),
    };
    let result = Settings::resolve(flags).map_err(|error| failure::Failure { code: failure::CONFIG, error }).and_then(|s| run(&s));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f);
            ExitCode::from(f.code)
        }
    }
}
