//! Command-line front end for the flimcurate pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use flimcurate::pipeline::{run_pipeline, PipelineConfig, Stage};
use flimcurate::Error;

/// Environment variable overriding the output root.
const OUT_ENV: &str = "FLIMCURATE_OUT";

#[derive(Parser)]
#[command(
    name = "flimcurate",
    version,
    about = "Synthetic FLIm curation pipeline: simulate, extract features, \
             train, run confident-learning triage, refine classes, attribute"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override (beats FLIMCURATE_OUT and the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset: manifest, corruption log, waveforms.
    Synth(StageArgs),
    /// Extract the per-point feature matrix from raw waveforms.
    Features(StageArgs),
    /// Train candidate models under LOPO and select the baseline.
    Train(StageArgs),
    /// Run the confident-learning triage on the baseline posteriors.
    Curate(StageArgs),
    /// Iteratively merge classes, prune low-confidence points, retrain.
    Refine(StageArgs),
    /// Shapley attributions and permutation importance for the final model.
    Attrib(StageArgs),
    /// Write the human-readable run summary.
    Report(StageArgs),
    /// Run every stage listed in the config, in order.
    All(StageArgs),
}

impl Command {
    fn stage_override(&self) -> Option<Stage> {
        match self {
            Command::Synth(_) => Some(Stage::Synth),
            Command::Features(_) => Some(Stage::Features),
            Command::Train(_) => Some(Stage::Train),
            Command::Curate(_) => Some(Stage::Curate),
            Command::Refine(_) => Some(Stage::Refine),
            Command::Attrib(_) => Some(Stage::Attrib),
            Command::Report(_) => Some(Stage::Report),
            Command::All(_) => None,
        }
    }

    fn args(&self) -> &StageArgs {
        match self {
            Command::Synth(a)
            | Command::Features(a)
            | Command::Train(a)
            | Command::Curate(a)
            | Command::Refine(a)
            | Command::Attrib(a)
            | Command::Report(a)
            | Command::All(a) => a,
        }
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let args = cli.command.args();
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        Error::Config(format!("cannot read config {}: {e}", args.config.display()))
    })?;
    let mut config = PipelineConfig::from_toml(&text)?;
    if let Some(seed) = args.seed {
        config.pipeline.seed = seed;
    }
    if let Some(stage) = cli.command.stage_override() {
        config.pipeline.stages = vec![stage];
    }
    let out_dir: PathBuf = args
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&config.pipeline.out_dir));

    let written = run_pipeline(&config, &out_dir)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                Error::Config(_) => 2,
                Error::StageDependency { .. } => 3,
                Error::Numerical(_) | Error::DegenerateInput(_) => 4,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
