//! Command-line front end of the pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ascfuse::config::{Experiment, Preset};
use ascfuse::kfold::run_kfold;
use ascfuse::runner::{run_all, run_stage, Stage, StageOutcome};
use ascfuse::PipelineError;

#[derive(Parser)]
#[command(name = "ascfuse", about = "Acoustic scene classification pipeline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    /// Experiment config file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the network preset (table1 or vgg-mini).
    #[arg(long)]
    preset: Option<Preset>,
    /// Re-run even when a matching completion record exists.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic dataset.
    Synth(StageArgs),
    /// Compute spectrograms and patches for every segment.
    Spectrogram(StageArgs),
    /// Train the basic model of each spectrogram kind.
    TrainBasic(StageArgs),
    /// Group classes into super-classes from each basic model's confusion.
    Expand(StageArgs),
    /// Finetune each model with the added super-class head.
    TrainLe(StageArgs),
    /// Store deep features of every patch.
    Extract(StageArgs),
    /// Concatenate, compress and pair features; train the fusion SVMs.
    Fuse(StageArgs),
    /// Score all models and fusion pairs on the test split.
    Evaluate(StageArgs),
    /// Write the accuracy table and bar chart.
    Report(StageArgs),
    /// Run every configured stage in order.
    RunAll(StageArgs),
    /// Cross-validate: run the full pipeline once per fold.
    Kfold(StageArgs),
}

enum Action {
    One(Stage),
    All,
    Kfold,
}

fn init_threads() -> Result<(), PipelineError> {
    let Ok(value) = std::env::var("ASCFUSE_THREADS") else {
        return Ok(());
    };
    let threads: usize = value.trim().parse().map_err(|_| {
        PipelineError::BadConfig(format!(
            "ASCFUSE_THREADS must be a positive integer, got `{value}`"
        ))
    })?;
    if threads == 0 {
        return Err(PipelineError::BadConfig("ASCFUSE_THREADS must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| PipelineError::StageFailed(format!("cannot size the thread pool: {e}")))
}

fn print_outcome(stage: Stage, outcome: StageOutcome) {
    match outcome {
        StageOutcome::Ran => println!("{stage}: done"),
        StageOutcome::Skipped => println!("{stage}: already done, skipped"),
    }
}

fn run() -> Result<(), PipelineError> {
    init_threads()?;
    let cli = Cli::parse();
    let (args, action) = match &cli.command {
        Command::Synth(a) => (a, Action::One(Stage::Synth)),
        Command::Spectrogram(a) => (a, Action::One(Stage::Spectrogram)),
        Command::TrainBasic(a) => (a, Action::One(Stage::TrainBasic)),
        Command::Expand(a) => (a, Action::One(Stage::Expand)),
        Command::TrainLe(a) => (a, Action::One(Stage::TrainLe)),
        Command::Extract(a) => (a, Action::One(Stage::Extract)),
        Command::Fuse(a) => (a, Action::One(Stage::Fuse)),
        Command::Evaluate(a) => (a, Action::One(Stage::Evaluate)),
        Command::Report(a) => (a, Action::One(Stage::Report)),
        Command::RunAll(a) => (a, Action::All),
        Command::Kfold(a) => (a, Action::Kfold),
    };
    let exp = Experiment::load(&args.config, args.seed, args.preset)?;
    match action {
        Action::One(stage) => print_outcome(stage, run_stage(&exp, stage, args.force)?),
        Action::All => {
            for (stage, outcome) in run_all(&exp, args.force)? {
                print_outcome(stage, outcome);
            }
        }
        Action::Kfold => {
            let summary = run_kfold(&exp, args.force)?;
            println!(
                "kfold: {} folds summarized in {}",
                summary.folds,
                exp.workdir.join("kfold").join("summary.json").display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
