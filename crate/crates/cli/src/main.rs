use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fairgo_core::data::write_dataset;
use fairgo_core::pipeline::{generate_synthetic, load_config, run_all, run_stage, PipelineError, RunConfig, Stage};
use log::{error, info};

/// Fair recommender embeddings: train a base model, filter its embeddings
/// adversarially and audit what the filtered embeddings still reveal.
#[derive(Parser)]
#[command(name = "fairgo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the dataset, split it and write the rating store.
    Ingest(StageArgs),
    /// Train the PMF or GCN base embeddings.
    TrainBase(StageArgs),
    /// Train the filters against the discriminators.
    TrainFair(StageArgs),
    /// Measure RMSE, attribute leakage and group fairness.
    Audit(StageArgs),
    /// Merge the audit metrics into report.json and report.txt.
    Report(StageArgs),
    /// Run every stage in order.
    Run(StageArgs),
    /// Write a synthetic planted-attribute dataset in the store format.
    Generate(StageArgs),
}

#[derive(Args)]
struct StageArgs {
    /// Flat TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl StageArgs {
    fn load(&self) -> Result<RunConfig, PipelineError> {
        let mut config = load_config(&self.config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.out = out.clone();
        }
        Ok(config)
    }
}

fn run(command: Command) -> Result<(), PipelineError> {
    let (stage, args) = match command {
        Command::Ingest(a) => (Some(Stage::Ingest), a),
        Command::TrainBase(a) => (Some(Stage::TrainBase), a),
        Command::TrainFair(a) => (Some(Stage::TrainFair), a),
        Command::Audit(a) => (Some(Stage::Audit), a),
        Command::Report(a) => (Some(Stage::Report), a),
        Command::Run(a) => (None, a),
        Command::Generate(a) => {
            let config = a.load()?;
            let (store, attributes) = generate_synthetic(&config.synthetic()?)?;
            write_dataset(&config.out, &store, &attributes)?;
            info!("generate: {} ratings written to {}", store.len(), config.out.display());
            return Ok(());
        }
    };
    let config = args.load()?;
    let outcomes = match stage {
        Some(stage) => vec![run_stage(stage, &config)?],
        None => run_all(&config)?,
    };
    for outcome in &outcomes {
        info!("{} done, {} artifacts", outcome.stage, outcome.artifacts.len());
        if outcome.stage == Stage::Report {
            print!("{}", std::fs::read_to_string(config.out.join("report.txt"))?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            match e {
                PipelineError::ConfigInvalid(_)
                | PipelineError::MissingPrerequisite(_)
                | PipelineError::HashMismatch { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
