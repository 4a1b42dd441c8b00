use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use ilps::config::ExperimentConfig;
use ilps::pipeline::{Pipeline, Stage};
use ilps::synth::{write_fixture, FixtureSizes};

#[derive(Parser)]
#[command(name = "ilps", version, about = "Instance-level parser selection for delexicalized cross-lingual parsing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads for per-language and per-pair work.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one delexicalized parser per source treebank.
    TrainParsers(Common),
    /// Parse every source sentence with every parser.
    CrossParse(Common),
    /// Turn cross-parse accuracies into soft selection labels.
    MakeLabels(Common),
    /// Masked-tag pretraining of the encoder.
    Pretrain(Common),
    /// Train the selection model on the labels.
    TrainIlps(Common),
    /// Score every parser on every target sentence.
    Predict(Common),
    /// Choose parsers per sentence or per treebank.
    Select(Common),
    /// Merge the selected parses into output trees.
    Reparse(Common),
    /// Treebank-level selection by trigram KL and typological vectors.
    Baselines(Common),
    /// Score every output against gold and write the report.
    Evaluate(Common),
    /// Upper bounds from gold-informed selection.
    Oracle(Common),
    /// Run every stage in order.
    All(Common),
    /// Write the synthetic two-family fixture and its config.
    Synth {
        dir: PathBuf,
        #[arg(long, default_value_t = 400)]
        train: usize,
        #[arg(long, default_value_t = 150)]
        test: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn run_stage(stage: Stage, args: Common) -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let Some(out) = args.out.or_else(|| cfg.out.clone()) else {
        bail!("no output directory: pass --out or set `out` in the config");
    };
    let pipeline = Pipeline::new(cfg, out, args.jobs)?;
    pipeline.run(stage)?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (stage, args) = match cli.command {
        Command::TrainParsers(a) => (Stage::TrainParsers, a),
        Command::CrossParse(a) => (Stage::CrossParse, a),
        Command::MakeLabels(a) => (Stage::MakeLabels, a),
        Command::Pretrain(a) => (Stage::Pretrain, a),
        Command::TrainIlps(a) => (Stage::TrainIlps, a),
        Command::Predict(a) => (Stage::Predict, a),
        Command::Select(a) => (Stage::Select, a),
        Command::Reparse(a) => (Stage::Reparse, a),
        Command::Baselines(a) => (Stage::Baselines, a),
        Command::Evaluate(a) => (Stage::Evaluate, a),
        Command::Oracle(a) => (Stage::Oracle, a),
        Command::All(a) => (Stage::All, a),
        Command::Synth { dir, train, test, seed } => {
            let cfg = write_fixture(&dir, &FixtureSizes { train, test }, seed)
                .with_context(|| format!("writing fixture to {}", dir.display()))?;
            println!("{}", cfg.display());
            return Ok(());
        }
    };
    run_stage(stage, args).with_context(|| format!("stage `{}` failed", stage))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::FAILURE
        }
    }
}
