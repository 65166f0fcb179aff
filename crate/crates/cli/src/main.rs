mod commands;
mod output;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use settings::UsageError;

#[derive(Parser)]
#[command(
    name = "gineplus",
    version,
    about = "GINE+ graph convolutions: data, training and expressiveness probes"
)]
struct Cli {
    /// Flat `key = value` file; flags take precedence over it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Gen(commands::gen::GenArgs),
    /// Train replicate models and summarise their held-out metrics.
    Train(commands::train::TrainArgs),
    /// Score a checkpoint on a dataset.
    Eval(commands::eval::EvalArgs),
    /// Build the crossed double cover of a graph and compare embeddings.
    Counterexample(commands::counterexample::CounterexampleArgs),
    /// Parameter counts and per-epoch time of GINE against GINE+.
    Bench(commands::bench::BenchArgs),
}

/// Diagnostic tag and exit status for an error.
fn classify(err: &anyhow::Error) -> (&'static str, u8) {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return ("usage", 2);
        }
        if let Some(e) = cause.downcast_ref::<gineplus::Error>() {
            return (e.kind(), 1);
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return ("io", 1);
        }
    }
    ("runtime", 1)
}

/// `outer: inner: ...`, skipping causes the previous message already ends with.
fn describe(err: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !msg.ends_with(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Gen(a) => commands::gen::run(a, config),
        Command::Train(a) => commands::train::run(a, config),
        Command::Eval(a) => commands::eval::run(a, config),
        Command::Counterexample(a) => commands::counterexample::run(a, config),
        Command::Bench(a) => commands::bench::run(a, config),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = classify(&e);
            eprintln!("error[{kind}]: {}", describe(&e));
            ExitCode::from(code)
        }
    }
}
