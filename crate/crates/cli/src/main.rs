mod commands;
mod config;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::{DataArgs, ModelArgs, RunArgs};

#[derive(Debug, Parser)]
#[command(
    name = "ltcnet",
    version,
    about = "Continuous-time recurrent networks: training, evaluation and checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write checkpoint.json, report.json, loss.csv and split.json
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// JSON file with the same fields as the flags; flags take precedence
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a split of the data it was trained on
    Eval {
        /// checkpoint.json or the run directory holding it
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = EvalSplit::Test)]
        split: EvalSplit,
        /// Overrides for the data settings stored in the checkpoint
        #[command(flatten)]
        data: DataArgs,
    },
    /// Print parameter counts
    CountParams {
        #[command(flatten)]
        model: ModelArgs,
        /// Add the neural-activation network of matching size
        #[arg(long)]
        compare_na: bool,
        #[arg(long)]
        json: bool,
    },
    /// Run a verification suite and print a JSON summary
    Check {
        #[arg(value_enum)]
        suite: CheckSuite,
        /// Also write the summary here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse a model descriptor and print what it stands for
    ParseDescriptor {
        descriptor: String,
        #[arg(long)]
        neurons: Option<usize>,
        #[arg(long)]
        inputs: Option<usize>,
    },
    /// Write synthetic rollouts as CSV files
    GenData {
        /// synthetic-oscillator or synthetic-pendulum
        #[arg(long, value_parser = config::kebab::<config::Task>)]
        task: config::Task,
        #[arg(long, default_value_t = 40)]
        rollouts: usize,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalSplit {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CheckSuite {
    Theorems,
    Gradients,
    Packing,
    Descriptor,
    All,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration; exit code 2.
    Usage(String),
    /// Failure while doing the work; exit code 1.
    Runtime(anyhow::Error),
    /// Work finished but a check failed; exit code 1 without a message.
    Failed,
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { run, config } => commands::train(run.with_config(config.as_deref())?),
        Command::Eval {
            checkpoint,
            split,
            data,
        } => commands::eval(&checkpoint, split, data),
        Command::CountParams {
            model,
            compare_na,
            json,
        } => commands::count_params(&model, compare_na, json),
        Command::Check { suite, out } => commands::check(suite, out.as_deref()),
        Command::ParseDescriptor {
            descriptor,
            neurons,
            inputs,
        } => commands::parse_descriptor(&descriptor, neurons, inputs),
        Command::GenData {
            task,
            rollouts,
            steps,
            seed,
            out,
        } => commands::gen_data(task, rollouts, steps, seed, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(CliError::Failed) => ExitCode::from(1),
    }
}
