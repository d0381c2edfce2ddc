mod cmd;
mod error;
mod report;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use error::CliError;

#[derive(Parser)]
#[command(name = "semfuse", version, about = "Online TSDF and semantic label fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse a dataset into a volume and write the labeled mesh
    Fuse(cmd::fuse::Args),
    /// Score a mesh or checkpoint against a ground-truth mesh
    Eval(cmd::eval::Args),
    /// Render a synthetic dataset from an analytic scene file
    Synth(cmd::synth::Args),
    /// Precision/recall/F1 over a list of outlier filter thresholds
    Sweep(cmd::sweep::Args),
    /// Describe a dataset, mesh or checkpoint
    Info(cmd::info::Args),
}

fn run(command: Command) -> Result<String, CliError> {
    match command {
        Command::Fuse(a) => cmd::fuse::run(a),
        Command::Eval(a) => cmd::eval::run(a),
        Command::Synth(a) => cmd::synth::run(a),
        Command::Sweep(a) => cmd::sweep::run(a),
        Command::Info(a) => cmd::info::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // --help and --version exit cleanly
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| run(cli.command)) {
        Ok(Ok(summary)) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(3)
        }
    }
}
