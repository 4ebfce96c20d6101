mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Few-shot knowledge-graph relation learning with a mixture of relation experts.
#[derive(Parser, Debug)]
#[command(name = "moemeta", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct DataArg {
    /// Dataset directory.
    #[arg(long, env = "MOEMETA_DATA")]
    pub data: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load a dataset, validate it, and print its size.
    Validate(DataArg),
    /// Generate a synthetic dataset with planted relation clusters.
    Synth {
        /// JSON generator config; defaults apply to missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Meta-train and write a run directory.
    Train(commands::TrainArgs),
    /// Meta-test a checkpoint and write metrics.json.
    Eval(commands::EvalArgs),
    /// Finite-difference check of the end-to-end gradient on a tiny task.
    Gradcheck(commands::GradcheckArgs),
    /// Export per-relation gate profiles as CSV.
    Gates(commands::GatesArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Validate(a) => commands::validate(&a),
        Command::Synth { config, out, seed } => commands::synth(config.as_deref(), &out, seed),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
        Command::Gates(a) => commands::gates(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 1 for bad input or configuration, 2 for failures during a run.
fn exit_code(e: &anyhow::Error) -> u8 {
    let input = e.chain().any(|c| {
        c.downcast_ref::<moemeta::Error>()
            .is_some_and(moemeta::Error::is_input_error)
            || c.downcast_ref::<serde_json::Error>().is_some()
            || c.downcast_ref::<std::io::Error>().is_some()
    });
    if input {
        1
    } else {
        2
    }
}
