use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use segvqa::pipeline::{self, PipelineConfig, PipelineError};

#[derive(Parser)]
#[command(version, about = "Build and evaluate a synthetic remote-sensing VQA benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse vectors, tile into patches and clip objects.
    Ingest(Common),
    /// Write one multi-channel mask per patch.
    Rasterize(Common),
    /// Generate balanced question/answer pairs.
    Generate(Common),
    /// Assign patches, and their questions, to train/val/test.
    Split(Common),
    /// Train the attention model.
    Train(Common),
    /// Evaluate on the test split.
    Eval(Common),
    /// Print per-type answer-bucket histograms.
    Stats(Common),
}

fn load(c: &Common) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.paths.out = o.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let manifest = match &cli.command {
        Command::Ingest(c) => pipeline::cmd_ingest(&load(c)?)?,
        Command::Rasterize(c) => pipeline::cmd_rasterize(&load(c)?)?,
        Command::Generate(c) => pipeline::cmd_generate(&load(c)?)?,
        Command::Split(c) => pipeline::cmd_split(&load(c)?)?,
        Command::Train(c) => pipeline::cmd_train(&load(c)?)?,
        Command::Eval(c) => {
            let cfg = load(c)?;
            let m = pipeline::cmd_eval(&cfg)?;
            print!(
                "{}",
                std::fs::read_to_string(cfg.out(pipeline::EVAL_TXT)).unwrap_or_default()
            );
            m
        }
        Command::Stats(c) => {
            let (m, text) = pipeline::cmd_stats(&load(c)?)?;
            print!("{text}");
            m
        }
    };
    for (k, v) in &manifest.summary {
        if !v.is_object() {
            println!("{k}: {v}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
